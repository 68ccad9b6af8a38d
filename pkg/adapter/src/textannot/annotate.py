"""Raw text to annotated corpus records.

Output records follow the coherence-toolkit corpus schema exactly: id,
text, tokens, sentences ([start, end) token pairs), entities
({sentence, start, end, surface}), label, optional pair_id, and, when
embedding export is on, token_embeddings and doc_embedding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable

from .embed import document_vector, token_vectors
from .ner import extract_entities
from .segment import segment

LABELS = ("human", "machine")


class EmptyAfterTokenization(ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} has no tokens")


@dataclass
class RawDocument:
    id: str
    text: str
    label: str
    pair_id: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"document {self.id!r} has empty text")
        if self.label not in LABELS:
            raise ValueError(f"document {self.id!r} has label {self.label!r}, "
                             f"expected one of {LABELS}")


def parse_raw(stream: Iterable[bytes | str]) -> list[RawDocument]:
    docs = []
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {line_no}: invalid JSON: {exc.msg}") from None
        try:
            docs.append(RawDocument(id=str(obj["id"]), text=obj["text"],
                                    label=obj["label"],
                                    pair_id=obj.get("pair_id")))
        except KeyError as exc:
            raise ValueError(f"line {line_no}: missing field {exc}") from None
    return docs


def annotate(raw: RawDocument, backend: str = "rulebased") -> dict:
    """One schema-valid corpus record with token-level sentence and entity
    spans.  Entity surfaces are the space-joined covered tokens, so
    detokenizing a span reproduces the surface exactly."""
    tokens, sentence_ranges = segment(raw.text)
    if not tokens:
        raise EmptyAfterTokenization(raw.id)
    spans = extract_entities(backend, tokens, sentence_ranges)
    token_texts = [t.text for t in tokens]
    record = {
        "id": raw.id,
        "text": raw.text,
        "tokens": token_texts,
        "sentences": [[a, b] for a, b in sentence_ranges],
        "entities": [{"sentence": s, "start": a, "end": b,
                      "surface": " ".join(token_texts[a:b])}
                     for s, a, b in spans],
        "label": raw.label,
    }
    if raw.pair_id is not None:
        record["pair_id"] = raw.pair_id
    return record


def export_embeddings(record: dict, embedder: str = "hash",
                      dim: int = 64) -> dict:
    """Fill token_embeddings and doc_embedding on an annotated record."""
    rows = token_vectors(embedder, record["tokens"], dim)
    out = dict(record)
    out["token_embeddings"] = rows
    out["doc_embedding"] = document_vector(rows, dim)
    return out


def annotate_stream(raws: Iterable[RawDocument], out: IO[str],
                    backend: str = "rulebased", embeddings: bool = False,
                    embedder: str = "hash", dim: int = 64) -> int:
    count = 0
    for raw in raws:
        record = annotate(raw, backend)
        if embeddings:
            record = export_embeddings(record, embedder, dim)
        out.write(json.dumps(record, ensure_ascii=False))
        out.write("\n")
        count += 1
    return count


def write_meta(path: str, embedder: str, dim: int) -> None:
    """Sidecar describing the exported embedding space (the corpus format
    has no room for a header record)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"embedder": embedder, "embedding_dim": dim}, fh)
        fh.write("\n")
