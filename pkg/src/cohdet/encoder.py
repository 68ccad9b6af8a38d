"""Coherence encoder: node embeddings -> relation-aware GCN -> sentence
aggregation -> attention LSTM -> fused document vector.

The sequence half of the document vector comes from a precomputed
``doc_embedding`` when the corpus file carries one, otherwise from the
mean of the (precomputed or hashed) token embeddings, so the module works
with or without an external embedding model.
"""
from __future__ import annotations

import hashlib
import io
import math
import zipfile
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Value
from .corpus import Document, Label
from .graph import CoherenceGraph, GraphLimits, build_graph, normalized_laplacian


class DimensionMismatch(ValueError):
    def __init__(self, file_dim: int, config_dim: int):
        super().__init__(f"embedding dimension {file_dim} in corpus file, "
                         f"config expects {config_dim}")


class EmptySentenceList(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    embed_dim: int = 64
    hidden_dim: int = 64
    gcn_layers: int = 2
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.gcn_layers != 2:
            raise ValueError("the graph convolution is fixed at two layers")


# ---------------------------------------------------------------------------
# deterministic hash embeddings

_hash_cache: dict[tuple[str, int], np.ndarray] = {}


def hash_embedding(token: str, dim: int) -> np.ndarray:
    """Map a token string to a unit-norm vector of +-1/sqrt(dim) entries.

    Sign bits come from a BLAKE2b digest of the token, so the mapping is
    stable across runs and platforms and independent of any seed.
    """
    cached = _hash_cache.get((token, dim))
    if cached is not None:
        return cached
    bits: list[int] = []
    block = 0
    while len(bits) < dim:
        digest = hashlib.blake2b(token.encode("utf-8") + block.to_bytes(4, "big"),
                                 digest_size=64).digest()
        for byte in digest:
            for shift in range(8):
                bits.append((byte >> shift) & 1)
        block += 1
    vec = (2.0 * np.array(bits[:dim], dtype=np.float64) - 1.0) / math.sqrt(dim)
    vec.setflags(write=False)
    _hash_cache[(token, dim)] = vec
    return vec


class EmbeddingSource:
    """Per-document token and sequence embeddings.

    Uses the corpus file's ``token_embeddings`` / ``doc_embedding`` fields
    when present (their width must match the configured embed_dim) and the
    hash embedder otherwise.
    """

    def __init__(self, dim: int):
        self.dim = dim

    def token_matrix(self, doc: Document) -> np.ndarray:
        if doc.token_embeddings is not None:
            arr = np.asarray(doc.token_embeddings, dtype=np.float64)
            if arr.size == 0:
                arr = arr.reshape(0, self.dim)
            if arr.shape[1] != self.dim:
                raise DimensionMismatch(arr.shape[1], self.dim)
            return arr
        if not doc.tokens:
            return np.zeros((0, self.dim))
        return np.vstack([hash_embedding(t, self.dim) for t in doc.tokens])

    def doc_vector(self, doc: Document) -> np.ndarray:
        if doc.doc_embedding is not None:
            vec = np.asarray(doc.doc_embedding, dtype=np.float64)
            if vec.shape[0] != self.dim:
                raise DimensionMismatch(vec.shape[0], self.dim)
            return vec.reshape(1, self.dim)
        tokens = self.token_matrix(doc)
        if tokens.shape[0] == 0:
            return np.zeros((1, self.dim))
        return tokens.mean(axis=0, keepdims=True)


# ---------------------------------------------------------------------------
# parameters

_LSTM_GATES = ("i", "f", "g", "o")


def tensor_shapes(config: EncoderConfig) -> dict[str, tuple[int, int]]:
    d, h = config.embed_dim, config.hidden_dim
    shapes: dict[str, tuple[int, int]] = {}
    for rel in ("inner", "inter"):
        shapes[f"gcn_{rel}_w1"] = (d, h)
        shapes[f"gcn_{rel}_w2"] = (h, h)
    shapes["sent_w"] = (h, h)
    shapes["sent_b"] = (1, h)
    for proj in ("k", "q", "v"):
        shapes[f"attn_w{proj}"] = (h, h)
    for gate in _LSTM_GATES:
        shapes[f"lstm_wx_{gate}"] = (h, h)
        shapes[f"lstm_wh_{gate}"] = (h, h)
        shapes[f"lstm_b_{gate}"] = (1, h)
    shapes["clf_w"] = (h + d, 1)
    shapes["clf_b"] = (1, 1)
    return shapes


CLASSIFIER_KEYS = ("clf_w", "clf_b")


class Params:
    """All trainable tensors, keyed by name."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = tensors

    @classmethod
    def initialize(cls, config: EncoderConfig) -> "Params":
        """Seeded init: weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
        biases zero except the LSTM forget-gate bias at 1.0."""
        rng = np.random.default_rng(config.seed)
        tensors: dict[str, np.ndarray] = {}
        for name, shape in tensor_shapes(config).items():
            if name.endswith("_b") or "_b_" in name:
                tensors[name] = np.zeros(shape)
            else:
                bound = 1.0 / math.sqrt(shape[0])
                tensors[name] = rng.uniform(-bound, bound, size=shape)
        tensors["lstm_b_f"] = np.ones_like(tensors["lstm_b_f"])
        return cls(tensors)

    def encoder_keys(self) -> list[str]:
        return [k for k in self.tensors if k not in CLASSIFIER_KEYS]

    def copy(self) -> "Params":
        return Params({k: v.copy() for k, v in self.tensors.items()})

    def as_leaves(self, tape: Tape) -> dict[str, Value]:
        return {k: ad.leaf(tape, v) for k, v in self.tensors.items()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Params):
            return NotImplemented
        return (self.tensors.keys() == other.tensors.keys()
                and all(np.array_equal(self.tensors[k], other.tensors[k])
                        for k in self.tensors))


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, params: Params, config: EncoderConfig,
                    limits: GraphLimits) -> None:
    """Versioned npz checkpoint.

    Written with a pinned zip timestamp so identical parameters produce
    byte-identical files; tensors round-trip bitwise through load.
    """
    meta = {
        "_version": np.array([CHECKPOINT_VERSION]),
        "_embed_dim": np.array([config.embed_dim]),
        "_hidden_dim": np.array([config.hidden_dim]),
        "_gamma": np.array([config.gamma]),
        "_seed": np.array([config.seed]),
        "_max_nodes": np.array([limits.max_nodes]),
        "_max_sentences": np.array([limits.max_sentences]),
    }
    entries = {**meta, **params.tensors}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in entries.items():
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.asarray(arr),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy",
                                   date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buffer.getvalue())


def load_checkpoint(path: str) -> tuple[Params, EncoderConfig, GraphLimits]:
    with np.load(path) as data:
        version = int(data["_version"][0])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = EncoderConfig(embed_dim=int(data["_embed_dim"][0]),
                               hidden_dim=int(data["_hidden_dim"][0]),
                               gamma=float(data["_gamma"][0]),
                               seed=int(data["_seed"][0]))
        limits = GraphLimits(max_nodes=int(data["_max_nodes"][0]),
                             max_sentences=int(data["_max_sentences"][0]))
        tensors = {k: data[k] for k in data.files if not k.startswith("_")}
    expected = tensor_shapes(config)
    if set(tensors) != set(expected):
        raise ValueError("checkpoint tensor names do not match the config")
    return Params(tensors), config, limits


# ---------------------------------------------------------------------------
# forward pieces

def init_node_embeddings(doc: Document, g: CoherenceGraph,
                         source: EmbeddingSource) -> np.ndarray:
    """Node representation = mean of the token embeddings in its span."""
    tokens = source.token_matrix(doc)
    out = np.zeros((g.n_nodes, source.dim))
    for i, node in enumerate(g.nodes):
        out[i] = tokens[node.token_start:node.token_end].mean(axis=0)
    return out


def sentence_averaging_matrix(g: CoherenceGraph, n_sentences: int) -> np.ndarray:
    """S x N matrix whose product with node features yields per-sentence
    means; sentences without surviving nodes get a zero row."""
    mat = np.zeros((n_sentences, g.n_nodes))
    for j, node in enumerate(g.nodes):
        mat[node.sentence_index, j] = 1.0
    counts = mat.sum(axis=1, keepdims=True)
    counts[counts == 0] = 1.0
    return mat / counts


def rgcn_forward(z_v: Value, a_hat_inner: Value, a_hat_inter: Value,
                 pv: dict[str, Value]) -> Value:
    """Two-layer graph convolution per relation, outputs summed.

    Per relation r: A_r ReLU(A_r Z W_r1) W_r2 with A_r the degree-
    normalized self-looped adjacency of that relation.
    """
    out = None
    for rel, a_hat in (("inner", a_hat_inner), ("inter", a_hat_inter)):
        hidden = ad.relu(ad.matmul(ad.matmul(a_hat, z_v), pv[f"gcn_{rel}_w1"]))
        layer2 = ad.matmul(ad.matmul(a_hat, hidden), pv[f"gcn_{rel}_w2"])
        out = layer2 if out is None else ad.add(out, layer2)
    return out


def aggregate_sentences(h: Value, sent_avg: Value, pv: dict[str, Value]) -> Value:
    """Per-sentence mean of sigmoid-activated affine node transforms."""
    transformed = ad.sigmoid(ad.add(ad.matmul(h, pv["sent_w"]), pv["sent_b"]))
    return ad.matmul(sent_avg, transformed)


def attention_lstm(z_s: Value, pv: dict[str, Value], gamma: float) -> Value:
    """Self-attention over sentence rows followed by one LSTM pass; returns
    the final hidden state (1 x hidden)."""
    n_sentences = z_s.shape[0]
    if n_sentences < 1:
        raise EmptySentenceList("attention needs at least one sentence")
    k = ad.matmul(z_s, pv["attn_wk"])
    q = ad.matmul(z_s, pv["attn_wq"])
    v = ad.matmul(z_s, pv["attn_wv"])
    d_z = k.shape[1]
    logits = ad.scale(ad.matmul(ad.l2_normalize_rows(k),
                                ad.transpose(ad.l2_normalize_rows(q))),
                      gamma / math.sqrt(d_z))
    attended = ad.matmul(ad.softmax_rows(logits), v)

    tape = z_s.tape
    hidden = ad.constant(tape, np.zeros((1, pv["lstm_wh_i"].shape[0])))
    cell = ad.constant(tape, np.zeros((1, pv["lstm_wh_i"].shape[0])))
    for t in range(n_sentences):
        x = ad.take_row(attended, t)
        gates = {}
        for gate in _LSTM_GATES:
            pre = ad.add(ad.add(ad.matmul(x, pv[f"lstm_wx_{gate}"]),
                                ad.matmul(hidden, pv[f"lstm_wh_{gate}"])),
                         pv[f"lstm_b_{gate}"])
            gates[gate] = ad.tanh(pre) if gate == "g" else ad.sigmoid(pre)
        cell = ad.add(ad.mul(gates["f"], cell), ad.mul(gates["i"], gates["g"]))
        hidden = ad.mul(gates["o"], ad.tanh(cell))
    return hidden


@dataclass
class PreparedDoc:
    """Everything about one document that does not depend on parameters."""

    doc: Document
    graph: CoherenceGraph
    a_hat_inner: np.ndarray | None
    a_hat_inter: np.ndarray | None
    node_embeddings: np.ndarray | None
    sent_avg: np.ndarray | None
    seq_vector: np.ndarray
    label: int  # 1 = machine


def prepare_document(doc: Document, source: EmbeddingSource,
                     limits: GraphLimits = GraphLimits(),
                     graph: CoherenceGraph | None = None) -> PreparedDoc:
    g = graph if graph is not None else build_graph(doc, limits)
    seq = source.doc_vector(doc)
    if g.n_nodes == 0:
        return PreparedDoc(doc=doc, graph=g, a_hat_inner=None, a_hat_inter=None,
                           node_embeddings=None, sent_avg=None, seq_vector=seq,
                           label=int(doc.label is Label.MGT))
    n_sentences = min(len(doc.sentences), limits.max_sentences)
    return PreparedDoc(
        doc=doc,
        graph=g,
        a_hat_inner=normalized_laplacian(g.a_inner),
        a_hat_inter=normalized_laplacian(g.a_inter),
        node_embeddings=init_node_embeddings(doc, g, source),
        sent_avg=sentence_averaging_matrix(g, n_sentences),
        seq_vector=seq,
        label=int(doc.label is Label.MGT),
    )


def encode_prepared(tape: Tape, prep: PreparedDoc, pv: dict[str, Value],
                    config: EncoderConfig) -> Value:
    """Document vector: coherence half concatenated with the sequence half.

    Documents without entities contribute a zero coherence half instead of
    erroring; the sequence half always exists.
    """
    seq = ad.constant(tape, prep.seq_vector)
    if prep.graph.n_nodes == 0:
        z_c = ad.constant(tape, np.zeros((1, config.hidden_dim)))
    else:
        z_v = ad.constant(tape, prep.node_embeddings)
        h = rgcn_forward(z_v, ad.constant(tape, prep.a_hat_inner),
                         ad.constant(tape, prep.a_hat_inter), pv)
        z_s = aggregate_sentences(h, ad.constant(tape, prep.sent_avg), pv)
        z_c = attention_lstm(z_s, pv, config.gamma)
    return ad.concat_cols([z_c, seq])


def encode_document(doc: Document, g: CoherenceGraph, params: Params,
                    config: EncoderConfig,
                    source: EmbeddingSource | None = None,
                    limits: GraphLimits = GraphLimits()) -> np.ndarray:
    """Parameter-free entry point: encode one document to a plain vector."""
    source = source or EmbeddingSource(config.embed_dim)
    prep = prepare_document(doc, source, limits, graph=g)
    tape = Tape()
    return encode_prepared(tape, prep, params.as_leaves(tape), config).data.copy()


def classify(d: Value, pv: dict[str, Value]) -> Value:
    """Probability that the document is machine-generated, as a 1x1 Value."""
    return ad.sigmoid(ad.add(ad.matmul(d, pv["clf_w"]), pv["clf_b"]))
