"""Sentence segmentation and tokenization with character offsets.

Kept intentionally simple and deterministic: sentences end at ., ! or ?
runs followed by whitespace (or end of text); tokens are word characters
or single punctuation marks.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)")


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # character offset
    end: int


def tokenize(text: str) -> list[Token]:
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN.finditer(text)]


def sentence_char_spans(text: str) -> list[tuple[int, int]]:
    """Half-open character spans, one per sentence; whitespace trimmed."""
    spans = []
    cursor = 0
    for m in _BOUNDARY.finditer(text):
        spans.append((cursor, m.end()))
        cursor = m.end()
    if text[cursor:].strip():
        spans.append((cursor, len(text)))

    trimmed = []
    for start, end in spans:
        chunk = text[start:end]
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        if start + lead < end - trail:
            trimmed.append((start + lead, end - trail))
    return trimmed


def segment(text: str) -> tuple[list[Token], list[tuple[int, int]]]:
    """Tokens plus per-sentence token index ranges (half-open).

    Tokens outside every sentence span cannot occur because sentences
    cover all non-whitespace text.
    """
    tokens = tokenize(text)
    char_spans = sentence_char_spans(text)
    ranges = []
    t = 0
    for start, end in char_spans:
        while t < len(tokens) and tokens[t].start < start:
            t += 1
        first = t
        while t < len(tokens) and tokens[t].end <= end:
            t += 1
        if t > first:
            ranges.append((first, t))
    return tokens, ranges
