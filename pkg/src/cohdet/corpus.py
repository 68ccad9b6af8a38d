"""Annotated document corpus: schema, validation, serialization, sampling.

A corpus is a UTF-8 newline-delimited file of JSON records, one document
per line.  Required fields: ``id``, ``text``, ``tokens``, ``sentences``
(list of ``[start, end)`` token-index pairs), ``entities`` (list of
``{sentence, start, end, surface}``), ``label`` ("human" or "machine").
Optional: ``pair_id``, ``doc_embedding``, ``token_embeddings``.  Unknown
fields are ignored.
"""
from __future__ import annotations

import json
import math
import random
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable


class Label(Enum):
    HWT = "human"
    MGT = "machine"


class CorpusError(ValueError):
    """Base class for corpus validation failures."""


class MalformedRecord(CorpusError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SpanOutOfRange(CorpusError):
    def __init__(self, doc_id: str, reason: str):
        self.doc_id = doc_id
        self.reason = reason
        super().__init__(f"document {doc_id!r}: {reason}")


class UnknownLabel(CorpusError):
    def __init__(self, doc_id: str, value: object):
        self.doc_id = doc_id
        self.value = value
        super().__init__(f"document {doc_id!r}: unknown label {value!r}")


class InsufficientClass(CorpusError):
    def __init__(self, label: Label, have: int, need: int):
        self.label = label
        self.have = have
        self.need = need
        super().__init__(f"class {label.value}: have {have}, need {need}")


@dataclass(frozen=True)
class SentenceSpan:
    """Half-open token range of one sentence."""

    index: int
    token_start: int
    token_end: int


@dataclass
class EntityMention:
    """One entity mention; token range is relative to the whole document."""

    sentence_index: int
    token_start: int
    token_end: int
    surface: str
    key: str = ""

    def __post_init__(self):
        if not self.key:
            self.key = normalize_surface(self.surface)


@dataclass
class Document:
    id: str
    text: str
    tokens: list[str]
    sentences: list[SentenceSpan]
    entities: list[EntityMention]
    label: Label
    pair_id: str | None = None
    doc_embedding: list[float] | None = None
    token_embeddings: list[list[float]] | None = None


_PUNCT = set(string.punctuation)


def normalize_surface(surface: str) -> str:
    """Case-fold, collapse whitespace, strip leading/trailing punctuation.

    Interior punctuation survives, so "U.S." normalizes to "u.s".
    """
    key = " ".join(surface.casefold().split())
    return key.strip(string.punctuation + " ")


def entity_key(mention: EntityMention) -> str:
    """Normalized identity of a mention; mentions with equal keys are the
    same entity for graph construction."""
    return normalize_surface(mention.surface)


def document_from_record(obj: dict, line: int = 0) -> Document:
    """Validate one decoded record and build a Document.

    Raises MalformedRecord for schema/type problems, SpanOutOfRange for
    index violations, UnknownLabel for labels outside {human, machine}.
    """
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "record is not an object")

    for name, typ in (("id", str), ("text", str), ("tokens", list),
                      ("sentences", list), ("entities", list)):
        if name not in obj:
            raise MalformedRecord(line, f"missing field {name!r}")
        if not isinstance(obj[name], typ):
            raise MalformedRecord(line, f"field {name!r} has wrong type")

    doc_id = obj["id"]
    tokens = obj["tokens"]
    if not all(isinstance(t, str) for t in tokens):
        raise MalformedRecord(line, "tokens must be strings")

    label_raw = obj.get("label")
    try:
        label = Label(label_raw)
    except ValueError:
        raise UnknownLabel(doc_id, label_raw) from None

    n_tokens = len(tokens)
    sentences: list[SentenceSpan] = []
    prev_end = 0
    for idx, pair in enumerate(obj["sentences"]):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, int) for v in pair)):
            raise MalformedRecord(line, f"sentence {idx} is not an [start, end] pair")
        start, end = pair
        if not (0 <= start < end <= n_tokens):
            raise SpanOutOfRange(doc_id, f"sentence {idx} span [{start}, {end}) "
                                         f"outside 0..{n_tokens}")
        if start < prev_end:
            raise SpanOutOfRange(doc_id, f"sentence {idx} overlaps or is out of order")
        prev_end = end
        sentences.append(SentenceSpan(index=idx, token_start=start, token_end=end))

    entities: list[EntityMention] = []
    for idx, ent in enumerate(obj["entities"]):
        if not isinstance(ent, dict):
            raise MalformedRecord(line, f"entity {idx} is not an object")
        try:
            sent_idx = ent["sentence"]
            start = ent["start"]
            end = ent["end"]
            surface = ent["surface"]
        except KeyError as exc:
            raise MalformedRecord(line, f"entity {idx} missing field {exc}") from None
        if not (isinstance(sent_idx, int) and isinstance(start, int)
                and isinstance(end, int) and isinstance(surface, str)):
            raise MalformedRecord(line, f"entity {idx} has wrong field types")
        if not (0 <= sent_idx < len(sentences)):
            raise SpanOutOfRange(doc_id, f"entity {idx} sentence index {sent_idx} invalid")
        if start >= end:
            raise SpanOutOfRange(doc_id, f"entity {idx} has empty span")
        span = sentences[sent_idx]
        if not (span.token_start <= start and end <= span.token_end):
            raise SpanOutOfRange(doc_id, f"entity {idx} span [{start}, {end}) "
                                         f"not inside sentence {sent_idx}")
        entities.append(EntityMention(sentence_index=sent_idx, token_start=start,
                                      token_end=end, surface=surface))

    pair_id = obj.get("pair_id")
    if pair_id is not None and not isinstance(pair_id, str):
        raise MalformedRecord(line, "pair_id must be a string")

    doc_embedding = obj.get("doc_embedding")
    if doc_embedding is not None:
        if not isinstance(doc_embedding, list) or not all(
                isinstance(v, (int, float)) for v in doc_embedding):
            raise MalformedRecord(line, "doc_embedding must be a number array")
        doc_embedding = [float(v) for v in doc_embedding]

    token_embeddings = obj.get("token_embeddings")
    if token_embeddings is not None:
        if not isinstance(token_embeddings, list) or len(token_embeddings) != n_tokens:
            raise MalformedRecord(line, "token_embeddings must have one row per token")
        dims = set()
        rows = []
        for row in token_embeddings:
            if not isinstance(row, list) or not all(
                    isinstance(v, (int, float)) for v in row):
                raise MalformedRecord(line, "token_embeddings rows must be number arrays")
            dims.add(len(row))
            rows.append([float(v) for v in row])
        if len(dims) > 1:
            raise MalformedRecord(line, "token_embeddings rows have mixed dimensions")
        token_embeddings = rows

    return Document(id=doc_id, text=obj["text"], tokens=list(tokens),
                    sentences=sentences, entities=entities, label=label,
                    pair_id=pair_id, doc_embedding=doc_embedding,
                    token_embeddings=token_embeddings)


def document_to_record(doc: Document) -> dict:
    """Inverse of document_from_record; round-trips field-exactly."""
    rec: dict = {
        "id": doc.id,
        "text": doc.text,
        "tokens": list(doc.tokens),
        "sentences": [[s.token_start, s.token_end] for s in doc.sentences],
        "entities": [{"sentence": e.sentence_index, "start": e.token_start,
                      "end": e.token_end, "surface": e.surface}
                     for e in doc.entities],
        "label": doc.label.value,
    }
    if doc.pair_id is not None:
        rec["pair_id"] = doc.pair_id
    if doc.doc_embedding is not None:
        rec["doc_embedding"] = doc.doc_embedding
    if doc.token_embeddings is not None:
        rec["token_embeddings"] = doc.token_embeddings
    return rec


def parse_corpus(stream: Iterable[bytes | str]) -> list[Document]:
    """Parse newline-delimited records from a byte (or text) stream.

    Returns validated Documents in file order; the first invalid record
    raises with its 1-based line number attached.
    """
    docs: list[Document] = []
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedRecord(line_no, "invalid UTF-8") from None
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
        docs.append(document_from_record(obj, line=line_no))
    return docs


def load_corpus(path: str) -> list[Document]:
    with open(path, "rb") as fh:
        return parse_corpus(fh)


def write_corpus(docs: Iterable[Document], fh: IO[str]) -> None:
    for doc in docs:
        fh.write(json.dumps(document_to_record(doc), ensure_ascii=False))
        fh.write("\n")


def save_corpus(docs: Iterable[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_corpus(docs, fh)


def sample_low_resource(docs: list[Document], n: int, seed: int
                        ) -> tuple[list[Document], list[Document]]:
    """Draw a class-balanced training sample of size n without replacement.

    The sample holds ceil(n/2) human and floor(n/2) machine documents,
    chosen by a seeded uniform shuffle per class; both returned lists keep
    the input order.  Deterministic for a given seed.
    """
    need = {Label.HWT: math.ceil(n / 2), Label.MGT: n // 2}
    by_class: dict[Label, list[int]] = {Label.HWT: [], Label.MGT: []}
    for i, doc in enumerate(docs):
        by_class[doc.label].append(i)

    for label, needed in need.items():
        if len(by_class[label]) < needed:
            raise InsufficientClass(label, len(by_class[label]), needed)

    rng = random.Random(seed)
    chosen: set[int] = set()
    for label in (Label.HWT, Label.MGT):
        pool = list(by_class[label])
        rng.shuffle(pool)
        chosen.update(pool[:need[label]])

    train = [docs[i] for i in range(len(docs)) if i in chosen]
    rest = [docs[i] for i in range(len(docs)) if i not in chosen]
    return train, rest
