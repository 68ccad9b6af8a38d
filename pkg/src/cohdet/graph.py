"""Entity-coherence graph construction.

Nodes are entity mentions.  Two mentions in the same sentence are joined
by an *inner* edge; mentions of the same entity (equal normalized key) in
different sentences are joined by an *inter* edge.  Each relation kind has
its own symmetric 0/1 adjacency matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import Document


class RelKind(Enum):
    INNER = "inner"
    INTER = "inter"


@dataclass(frozen=True)
class GraphLimits:
    """Caps applied during construction; defaults follow the tuned values."""

    max_nodes: int = 90
    max_sentences: int = 45

    def __post_init__(self):
        if self.max_nodes < 1 or self.max_sentences < 1:
            raise ValueError("limits must be >= 1")


@dataclass(frozen=True)
class NodeRef:
    sentence_index: int
    mention_index: int
    token_start: int
    token_end: int
    key: str


@dataclass
class CoherenceGraph:
    nodes: list[NodeRef]
    edges: list[tuple[int, int, RelKind]]
    a_inner: np.ndarray
    a_inter: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_graph(doc: Document, limits: GraphLimits = GraphLimits()) -> CoherenceGraph:
    """Build the coherence graph of one document.

    Mentions are taken from the first max_sentences sentences and truncated
    in reading order (sentence_index, token_start) to max_nodes.  Inner
    edges join every mention pair sharing a sentence; inter edges join
    every mention pair with equal key in different sentences, so an entity
    recurring in three or more sentences forms a clique.  Zero-entity
    documents yield an empty graph.
    """
    mentions = [m for m in doc.entities if m.sentence_index < limits.max_sentences]
    mentions.sort(key=lambda m: (m.sentence_index, m.token_start))
    mentions = mentions[:limits.max_nodes]

    nodes: list[NodeRef] = []
    per_sentence_count: dict[int, int] = {}
    for m in mentions:
        j = per_sentence_count.get(m.sentence_index, 0)
        per_sentence_count[m.sentence_index] = j + 1
        nodes.append(NodeRef(sentence_index=m.sentence_index, mention_index=j,
                             token_start=m.token_start, token_end=m.token_end,
                             key=m.key))

    n = len(nodes)
    a_inner = np.zeros((n, n), dtype=np.float64)
    a_inter = np.zeros((n, n), dtype=np.float64)
    edges: list[tuple[int, int, RelKind]] = []
    for u in range(n):
        for v in range(u + 1, n):
            same_sentence = nodes[u].sentence_index == nodes[v].sentence_index
            if same_sentence:
                a_inner[u, v] = a_inner[v, u] = 1.0
                edges.append((u, v, RelKind.INNER))
            elif nodes[u].key == nodes[v].key:
                a_inter[u, v] = a_inter[v, u] = 1.0
                edges.append((u, v, RelKind.INTER))

    return CoherenceGraph(nodes=nodes, edges=edges, a_inner=a_inner, a_inter=a_inter)


def merged_adjacency(g: CoherenceGraph) -> np.ndarray:
    """Elementwise OR of the two relation adjacencies."""
    if g.n_nodes == 0:
        return np.zeros((0, 0), dtype=np.float64)
    return np.maximum(g.a_inner, g.a_inter)


def normalized_laplacian(a_rel: np.ndarray) -> np.ndarray:
    """Symmetric degree-normalized propagation matrix.

    With self-loops added, A~ = A + I and D~ = diag(row sums of A~), this
    returns D~^{-1/2} A~ D~^{-1/2}.  The self-loop keeps every degree
    positive, so the result is always well defined.
    """
    a_rel = np.asarray(a_rel, dtype=np.float64)
    if a_rel.ndim != 2 or a_rel.shape[0] != a_rel.shape[1] or a_rel.shape[0] < 1:
        raise ValueError("adjacency must be a square matrix of size >= 1")
    a_tilde = a_rel + np.eye(a_rel.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * np.outer(inv_sqrt_deg, inv_sqrt_deg)


def graph_record(doc_id: str, g: CoherenceGraph) -> dict:
    """Dump format: one record per document."""
    return {
        "id": doc_id,
        "nodes": [{"sentence": n.sentence_index, "start": n.token_start, "key": n.key}
                  for n in g.nodes],
        "edges": [[u, v, rel.value] for u, v, rel in g.edges],
    }
