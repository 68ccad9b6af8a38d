"""Static geometric statistics over coherence graphs.

Everything here runs on the merged (relation-agnostic) adjacency.  These
are the descriptive discriminators between human-written and generated
corpora: average degree, degree-distribution divergence, largest connected
component, clustering, k-core decomposition, and structure entropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import CoherenceGraph, merged_adjacency


class EmptyGraph(ValueError):
    pass


class EmptyCorpus(ValueError):
    def __init__(self, side: str = ""):
        self.side = side
        super().__init__(f"no usable graphs{f' on side {side}' if side else ''}")


@dataclass
class DegreeHistogram:
    """Probability mass over integer node degrees, pooled over graphs."""

    bins: dict[int, float]
    n_nodes: int


@dataclass
class GraphStatsReport:
    n_nodes: int
    n_edges: int
    avg_degree: float
    lcc_portion: float
    avg_clustering: float
    core_numbers: list[int]
    degeneracy: int
    structure_entropy: float


def _adjacency(g) -> np.ndarray:
    if isinstance(g, CoherenceGraph):
        return merged_adjacency(g)
    return np.asarray(g, dtype=np.float64)


def _degrees(a: np.ndarray) -> np.ndarray:
    return a.sum(axis=1).astype(np.int64)


def avg_degree(g) -> float:
    """2E/N on the merged adjacency."""
    a = _adjacency(g)
    n = a.shape[0]
    if n == 0:
        raise EmptyGraph("average degree of an empty graph")
    return float(a.sum()) / n


def degree_histogram(gs: list) -> DegreeHistogram:
    """Pool node degrees across graphs; mass = node fraction per degree.

    Zero-node graphs contribute nothing; a corpus of only empty graphs is
    rejected.
    """
    counts: dict[int, int] = {}
    total = 0
    for g in gs:
        a = _adjacency(g)
        for d in _degrees(a):
            counts[int(d)] = counts.get(int(d), 0) + 1
            total += 1
    if total == 0:
        raise EmptyCorpus()
    return DegreeHistogram(bins={d: c / total for d, c in sorted(counts.items())},
                           n_nodes=total)


def js_divergence(p: DegreeHistogram, q: DegreeHistogram) -> float:
    """Jensen-Shannon divergence in nats over the union support.

    Bounded by ln 2; zero iff the histograms agree on the union support.
    """
    support = set(p.bins) | set(q.bins)
    jsd = 0.0
    for k in support:
        pk = p.bins.get(k, 0.0)
        qk = q.bins.get(k, 0.0)
        mk = 0.5 * (pk + qk)
        if pk > 0.0:
            jsd += 0.5 * pk * math.log(pk / mk)
        if qk > 0.0:
            jsd += 0.5 * qk * math.log(qk / mk)
    return jsd


def lcc_portion(g) -> float:
    """Fraction of nodes in the largest connected component."""
    a = _adjacency(g)
    n = a.shape[0]
    if n == 0:
        raise EmptyGraph("largest component of an empty graph")
    seen = np.zeros(n, dtype=bool)
    best = 0
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        size = 0
        while stack:
            u = stack.pop()
            size += 1
            for v in np.nonzero(a[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        best = max(best, size)
    return best / n


def avg_clustering(g) -> float:
    """Mean local clustering coefficient over all nodes.

    c(v) = 2 tri(v) / (deg(v) (deg(v) - 1)); nodes of degree < 2 count as 0
    and stay in the average.
    """
    a = _adjacency(g)
    n = a.shape[0]
    if n == 0:
        raise EmptyGraph("clustering of an empty graph")
    deg = _degrees(a)
    total = 0.0
    for v in range(n):
        if deg[v] < 2:
            continue
        nbrs = np.nonzero(a[v])[0]
        tri = a[np.ix_(nbrs, nbrs)].sum() / 2.0
        total += 2.0 * tri / (deg[v] * (deg[v] - 1))
    return float(total / n)


def core_decomposition(g) -> tuple[list[int], int]:
    """Core number per node via iterative minimum-degree peeling.

    core(v) is the largest k such that v survives in the k-core; the
    degeneracy is the maximum core number (0 for empty or edgeless graphs).
    """
    a = _adjacency(g)
    n = a.shape[0]
    if n == 0:
        return [], 0
    deg = _degrees(a).astype(np.int64)
    alive = np.ones(n, dtype=bool)
    core = np.zeros(n, dtype=np.int64)
    k = 0
    for _ in range(n):
        candidates = np.nonzero(alive)[0]
        v = candidates[np.argmin(deg[candidates])]
        k = max(k, int(deg[v]))
        core[v] = k
        alive[v] = False
        for u in np.nonzero(a[v])[0]:
            if alive[u]:
                deg[u] -= 1
    return [int(c) for c in core], int(core.max())


def structure_entropy(g) -> float:
    """Shannon entropy of the degree-fraction distribution, in nats.

    I_i = k_i / sum_j k_j over nodes with positive degree; an edgeless
    graph returns 0 by convention.
    """
    a = _adjacency(g)
    deg = _degrees(a)
    deg = deg[deg > 0]
    total = deg.sum()
    if total == 0:
        return 0.0
    frac = deg / total
    return float(-(frac * np.log(frac)).sum())


def graph_report(g) -> GraphStatsReport:
    a = _adjacency(g)
    n = a.shape[0]
    n_edges = int(a.sum()) // 2
    cores, degeneracy = core_decomposition(a)
    return GraphStatsReport(
        n_nodes=n,
        n_edges=n_edges,
        avg_degree=avg_degree(a) if n else 0.0,
        lcc_portion=lcc_portion(a) if n else 0.0,
        avg_clustering=avg_clustering(a) if n else 0.0,
        core_numbers=cores,
        degeneracy=degeneracy,
        structure_entropy=structure_entropy(a),
    )


@dataclass
class ClassSummary:
    """Per-class means of the per-graph statistics."""

    n_graphs: int
    avg_nodes: float
    avg_edges: float
    avg_degree: float
    lcc_portion: float
    avg_clustering: float
    avg_degeneracy: float
    avg_entropy: float

    def to_record(self) -> dict:
        return {
            "n_graphs": self.n_graphs,
            "avg_nodes": self.avg_nodes,
            "avg_edges": self.avg_edges,
            "avg_degree": self.avg_degree,
            "lcc_portion": self.lcc_portion,
            "avg_clustering": self.avg_clustering,
            "avg_degeneracy": self.avg_degeneracy,
            "avg_entropy": self.avg_entropy,
        }


def _class_summary(gs: list) -> ClassSummary:
    reports = [graph_report(g) for g in gs]
    nonempty = [r for r in reports if r.n_nodes > 0]
    if not nonempty:
        raise EmptyCorpus()

    def mean(vals):
        return sum(vals) / len(vals)

    return ClassSummary(
        n_graphs=len(reports),
        avg_nodes=mean([r.n_nodes for r in reports]),
        avg_edges=mean([r.n_edges for r in reports]),
        avg_degree=mean([r.avg_degree for r in nonempty]),
        lcc_portion=mean([r.lcc_portion for r in nonempty]),
        avg_clustering=mean([r.avg_clustering for r in nonempty]),
        avg_degeneracy=mean([r.degeneracy for r in nonempty]),
        avg_entropy=mean([r.structure_entropy for r in nonempty]),
    )


def corpus_report(gs_hwt: list, gs_mgt: list) -> dict:
    """Compare the two classes: per-class stat means plus the JS divergence
    between their pooled degree histograms.

    Per-graph statistics are averaged per graph, then across the class;
    empty graphs are skipped in per-graph means but counted in n_graphs.
    """
    if not gs_hwt:
        raise EmptyCorpus("hwt")
    if not gs_mgt:
        raise EmptyCorpus("mgt")
    try:
        hwt = _class_summary(gs_hwt)
    except EmptyCorpus:
        raise EmptyCorpus("hwt") from None
    try:
        mgt = _class_summary(gs_mgt)
    except EmptyCorpus:
        raise EmptyCorpus("mgt") from None
    jsd = js_divergence(degree_histogram(gs_hwt), degree_histogram(gs_mgt))
    return {"hwt": hwt, "mgt": mgt, "jsd_degree": jsd}
