"""Detection metrics, token-level perturbation harness, and statistic-cue
analysis over paired corpora."""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Document, EntityMention, Label, SentenceSpan


class LengthMismatch(ValueError):
    pass


class UnpairedDocument(ValueError):
    def __init__(self, doc_id: str, reason: str = ""):
        self.doc_id = doc_id
        super().__init__(f"document {doc_id!r} is not properly paired"
                         + (f": {reason}" if reason else ""))


class NoWindows(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics

@dataclass
class EvalReport:
    accuracy: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    n: int

    def to_record(self) -> dict:
        return {"accuracy": self.accuracy, "f1": self.f1, "tp": self.tp,
                "fp": self.fp, "fn": self.fn, "tn": self.tn, "n": self.n}


def evaluate(preds: Sequence[Label], labels: Sequence[Label]) -> EvalReport:
    """Accuracy and F1 with the machine class as positive; F1 is 0 when
    precision + recall is 0."""
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if not labels:
        raise LengthMismatch("empty inputs")
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p is Label.MGT and y is Label.MGT:
            tp += 1
        elif p is Label.MGT and y is Label.HWT:
            fp += 1
        elif p is Label.HWT and y is Label.MGT:
            fn += 1
        else:
            tn += 1
    n = len(labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalReport(accuracy=(tp + tn) / n, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn, n=n)


# ---------------------------------------------------------------------------
# perturbations

class PerturbKind(Enum):
    DELETE = "delete"
    REPEAT = "repeat"
    INSERT = "insert"
    REPLACE = "replace"


@dataclass(frozen=True)
class PerturbSpec:
    kind: PerturbKind
    scale: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.scale <= 1.0:
            raise ValueError("scale must be in (0, 1]")


def affected_count(scale: float, n_tokens: int) -> int:
    """Number of affected tokens: max(1, round(scale * n)); tiny documents
    are still perturbed."""
    return max(1, round(scale * n_tokens))


def _remap_after_delete(doc: Document, deleted: set[int]) -> Document:
    removed_before = []
    seen = 0
    for i in range(len(doc.tokens) + 1):
        removed_before.append(seen)
        if i in deleted:
            seen += 1

    tokens = [t for i, t in enumerate(doc.tokens) if i not in deleted]

    sentences: list[SentenceSpan] = []
    sentence_remap: dict[int, int] = {}
    for span in doc.sentences:
        new_start = span.token_start - removed_before[span.token_start]
        new_end = span.token_end - removed_before[span.token_end]
        if new_start == new_end:
            continue  # sentence lost all tokens
        sentence_remap[span.index] = len(sentences)
        sentences.append(SentenceSpan(index=len(sentences),
                                      token_start=new_start, token_end=new_end))

    entities: list[EntityMention] = []
    for ent in doc.entities:
        if any(i in deleted for i in range(ent.token_start, ent.token_end)):
            continue  # entity span was (partially) deleted
        if ent.sentence_index not in sentence_remap:
            continue
        entities.append(EntityMention(
            sentence_index=sentence_remap[ent.sentence_index],
            token_start=ent.token_start - removed_before[ent.token_start],
            token_end=ent.token_end - removed_before[ent.token_end],
            surface=ent.surface))

    return Document(id=doc.id, text=" ".join(tokens), tokens=tokens,
                    sentences=sentences, entities=entities, label=doc.label,
                    pair_id=doc.pair_id)


def _remap_after_insert(doc: Document, tokens: list[str],
                        gaps: list[int]) -> Document:
    """Spans shift for insertions at or before their start and stretch for
    insertions strictly inside."""
    def count_le(x: int) -> int:
        return sum(1 for g in gaps if g <= x)

    def count_lt(x: int) -> int:
        return sum(1 for g in gaps if g < x)

    sentences = [SentenceSpan(index=s.index,
                              token_start=s.token_start + count_le(s.token_start),
                              token_end=s.token_end + count_lt(s.token_end))
                 for s in doc.sentences]
    entities = [EntityMention(sentence_index=e.sentence_index,
                              token_start=e.token_start + count_le(e.token_start),
                              token_end=e.token_end + count_lt(e.token_end),
                              surface=e.surface)
                for e in doc.entities]
    return Document(id=doc.id, text=" ".join(tokens), tokens=tokens,
                    sentences=sentences, entities=entities, label=doc.label,
                    pair_id=doc.pair_id)


def perturb(doc: Document, spec: PerturbSpec,
            vocab: Sequence[str] | None = None) -> Document:
    """Apply one perturbation kind to a document, deterministically per seed.

    Delete removes exactly k tokens, Repeat and Insert add exactly k,
    Replace keeps the length; k = max(1, round(scale * n)).  Sentence and
    entity spans are re-indexed to stay schema-valid; entities that lose a
    token to Delete are dropped.  Insert and Replace draw from vocab (the
    document's own tokens when not given).  Precomputed embeddings are
    dropped because they no longer describe the token sequence.
    """
    n = len(doc.tokens)
    if n < 1:
        raise ValueError("cannot perturb a document with no tokens")
    k = affected_count(spec.scale, n)
    rng = random.Random(spec.seed)
    pool = list(vocab) if vocab is not None else sorted(set(doc.tokens))

    if spec.kind is PerturbKind.DELETE:
        deleted = set(rng.sample(range(n), k))
        return _remap_after_delete(doc, deleted)

    if spec.kind is PerturbKind.REPEAT:
        repeated = sorted(rng.sample(range(n), k))
        tokens: list[str] = []
        gaps = []
        for i, tok in enumerate(doc.tokens):
            tokens.append(tok)
            if i in repeated:
                tokens.append(tok)
                gaps.append(i + 1)  # duplicate sits immediately after i
        return _remap_after_insert(doc, tokens, gaps)

    if spec.kind is PerturbKind.INSERT:
        gaps = sorted(rng.randrange(n + 1) for _ in range(k))
        inserted = [rng.choice(pool) for _ in range(k)]
        tokens = list(doc.tokens)
        for offset, (gap, tok) in enumerate(zip(gaps, inserted)):
            tokens.insert(gap + offset, tok)
        return _remap_after_insert(doc, tokens, gaps)

    if spec.kind is PerturbKind.REPLACE:
        positions = rng.sample(range(n), k)
        tokens = list(doc.tokens)
        for pos in positions:
            tokens[pos] = rng.choice(pool)
        return Document(id=doc.id, text=" ".join(tokens), tokens=tokens,
                        sentences=list(doc.sentences),
                        entities=[EntityMention(e.sentence_index, e.token_start,
                                                e.token_end, e.surface)
                                  for e in doc.entities],
                        label=doc.label, pair_id=doc.pair_id)

    raise ValueError(f"unknown perturbation kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# statistic cues on paired data

@dataclass
class CueRow:
    applicability: int
    productivity: float | None  # undefined when applicability is 0
    coverage: float


@dataclass
class CueStats:
    n_pairs: int
    rows: dict[str, CueRow]


def pair_documents(docs: Sequence[Document]) -> list[tuple[Document, Document]]:
    """Group documents into (human, machine) pairs via pair_id."""
    by_id = {d.id: d for d in docs}
    paired: set[str] = set()
    pairs: list[tuple[Document, Document]] = []
    for doc in docs:
        if doc.id in paired:
            continue
        if doc.pair_id is None:
            raise UnpairedDocument(doc.id, "missing pair_id")
        partner = by_id.get(doc.pair_id)
        if partner is None or partner.id == doc.id:
            raise UnpairedDocument(doc.id, f"pair {doc.pair_id!r} not in corpus")
        if partner.label == doc.label:
            raise UnpairedDocument(doc.id, "pair members share a label")
        paired.update((doc.id, partner.id))
        hwt, mgt = (doc, partner) if doc.label is Label.HWT else (partner, doc)
        pairs.append((hwt, mgt))
    return pairs


def cue_stats(pairs: Sequence[tuple[Document, Document]],
              vocab: Sequence[str] | None = None) -> CueStats:
    """Applicability, productivity, and coverage of single-token cues.

    A cue applies to a pair when the token occurs in exactly one member;
    applicability counts such pairs, coverage is that count over all
    pairs, and productivity is the share of applicable pairs on the cue's
    majority exclusive side (best-class convention).
    """
    n_pairs = len(pairs)
    excl_hwt: dict[str, int] = {}
    excl_mgt: dict[str, int] = {}
    seen: set[str] = set()
    for hwt, mgt in pairs:
        hwt_tokens = set(hwt.tokens)
        mgt_tokens = set(mgt.tokens)
        seen.update(hwt_tokens | mgt_tokens)
        for tok in hwt_tokens - mgt_tokens:
            excl_hwt[tok] = excl_hwt.get(tok, 0) + 1
        for tok in mgt_tokens - hwt_tokens:
            excl_mgt[tok] = excl_mgt.get(tok, 0) + 1

    candidates = set(vocab) if vocab is not None else seen
    rows: dict[str, CueRow] = {}
    for tok in sorted(candidates):
        a = excl_hwt.get(tok, 0) + excl_mgt.get(tok, 0)
        if a == 0:
            rows[tok] = CueRow(applicability=0, productivity=None, coverage=0.0)
        else:
            best = max(excl_hwt.get(tok, 0), excl_mgt.get(tok, 0))
            rows[tok] = CueRow(applicability=a, productivity=best / a,
                               coverage=a / n_pairs)
    return CueStats(n_pairs=n_pairs, rows=rows)


def ngram_supporter_coverage(attribution_signs: Sequence[Sequence[float]],
                             n: int) -> float:
    """Fraction of length-n windows whose attribution signs are all positive."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0
    supporters = 0
    for seq in attribution_signs:
        for i in range(len(seq) - n + 1):
            total += 1
            if all(v > 0 for v in seq[i:i + n]):
                supporters += 1
    if total == 0:
        raise NoWindows(f"no length-{n} windows in the input")
    return supporters / total
