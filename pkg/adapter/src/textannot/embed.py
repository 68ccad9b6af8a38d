"""Deterministic token embeddings for the precomputed-embedding export.

Digest bytes of the token map to centered, norm-one float vectors; the
mapping depends only on the token string and the dimension, so repeated
exports are identical.
"""
from __future__ import annotations

import hashlib
import math


class EmbedderUnavailable(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"embedder {name!r} unavailable")


def hash_vector(token: str, dim: int) -> list[float]:
    raw: list[float] = []
    block = 0
    while len(raw) < dim:
        digest = hashlib.blake2s(f"{block}:{token}".encode("utf-8"),
                                 digest_size=32).digest()
        raw.extend(b / 255.0 - 0.5 for b in digest)
        block += 1
    vec = raw[:dim]
    norm = math.sqrt(sum(v * v for v in vec)) or 1.0
    return [v / norm for v in vec]


def token_vectors(embedder: str, tokens: list[str], dim: int) -> list[list[float]]:
    if embedder != "hash":
        raise EmbedderUnavailable(embedder)
    return [hash_vector(t, dim) for t in tokens]


def document_vector(token_rows: list[list[float]], dim: int) -> list[float]:
    if not token_rows:
        return [0.0] * dim
    n = len(token_rows)
    return [sum(row[j] for row in token_rows) / n for j in range(dim)]


AVAILABLE_EMBEDDERS = ("hash",)
