"""Shared builders for randomized test documents and graphs."""
from __future__ import annotations

import random

import numpy as np

from cohdet.corpus import Document, EntityMention, Label, SentenceSpan


def random_annotated_doc(rng: random.Random, doc_id: str = "r0",
                         max_sentences: int = 10,
                         max_mentions: int = 20) -> Document:
    """Random document that exercises awkward graph cases: repeated keys
    inside one sentence, entity-free sentences, multi-token mentions."""
    n_sentences = rng.randint(1, max_sentences)
    keys = [f"e{i}" for i in range(rng.randint(1, 6))]
    tokens: list[str] = []
    sentences: list[SentenceSpan] = []
    entities: list[EntityMention] = []
    budget = rng.randint(0, max_mentions)

    for s in range(n_sentences):
        start = len(tokens)
        n_mentions = 0
        if budget > 0:
            n_mentions = rng.randint(0, min(3, budget))
            budget -= n_mentions
        for _ in range(n_mentions):
            surface = rng.choice(keys)
            width = rng.randint(1, 2)
            m_start = len(tokens)
            parts = surface.split() + ["x"] * (width - 1)
            tokens.extend(parts[:width])
            entities.append(EntityMention(sentence_index=s, token_start=m_start,
                                          token_end=m_start + width,
                                          surface=surface))
            tokens.extend(f"w{rng.randrange(40)}" for _ in range(rng.randint(0, 2)))
        tokens.extend(f"w{rng.randrange(40)}" for _ in range(rng.randint(1, 4)))
        sentences.append(SentenceSpan(index=s, token_start=start,
                                      token_end=len(tokens)))

    label = Label.MGT if rng.random() < 0.5 else Label.HWT
    return Document(id=doc_id, text=" ".join(tokens), tokens=tokens,
                    sentences=sentences, entities=entities, label=label)


def random_adjacency(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Symmetric 0/1 adjacency with zero diagonal."""
    a = (rng.random((n, n)) < p).astype(np.float64)
    a = np.triu(a, 1)
    return a + a.T
