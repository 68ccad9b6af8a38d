"""Named-entity span extraction backends.

The built-in "rulebased" backend marks runs of capitalized tokens as
entities, skipping a stoplist of sentence-opening function words.  Other
backend names raise BackendUnavailable so callers can fall back or fail
loudly; golden tests pin the rule-based output.
"""
from __future__ import annotations

from .segment import Token


class BackendUnavailable(RuntimeError):
    def __init__(self, name: str, reason: str = "not installed"):
        self.name = name
        super().__init__(f"NER backend {name!r} unavailable: {reason}")


_FUNCTION_WORDS = {
    "the", "a", "an", "this", "that", "these", "those", "it", "he", "she",
    "they", "we", "you", "i", "in", "on", "at", "by", "for", "of", "to",
    "and", "but", "or", "so", "if", "when", "while", "after", "before",
    "as", "with", "from", "his", "her", "its", "their", "our", "my",
    "there", "here", "then", "now", "however", "meanwhile", "yesterday",
    "today", "tomorrow",
}


def _is_name_token(token: Token) -> bool:
    text = token.text
    if not text[0].isupper() or not text.isalpha():
        return False
    return text.lower() not in _FUNCTION_WORDS


def rule_based_spans(tokens: list[Token],
                     sentence_ranges: list[tuple[int, int]]
                     ) -> list[tuple[int, int, int]]:
    """(sentence index, token start, token end) for each maximal run of
    name-like tokens inside one sentence."""
    spans = []
    for s, (first, last) in enumerate(sentence_ranges):
        t = first
        while t < last:
            if _is_name_token(tokens[t]):
                run_start = t
                while t < last and _is_name_token(tokens[t]):
                    t += 1
                spans.append((s, run_start, t))
            else:
                t += 1
    return spans


def extract_entities(backend: str, tokens: list[Token],
                     sentence_ranges: list[tuple[int, int]]
                     ) -> list[tuple[int, int, int]]:
    if backend == "rulebased":
        return rule_based_spans(tokens, sentence_ranges)
    raise BackendUnavailable(backend)


AVAILABLE_BACKENDS = ("rulebased",)
