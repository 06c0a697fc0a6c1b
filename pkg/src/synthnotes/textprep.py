"""Text normalization and tokenization primitives.

Everything here is pure and stateless. The tokenizer records character
offsets and sentence indices because downstream keyword scoring needs
positional features; the normalizer strips a note down to its alphabetic
words, which is the input format for normalized generation and keyword
extraction.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass

# Letters and digits; underscore and punctuation split tokens.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
# Sentence cuts: terminal punctuation followed by whitespace, or a blank line.
_TERMINAL_RE = re.compile(r"[.!?]+(?=\s)")
_PARAGRAPH_RE = re.compile(r"\n[^\S\n]*\n(?:[^\S\n]*\n)*")


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    sentence_index: int


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def normalize_text(text: str) -> str:
    """Reduce text to its alphabetic words, single-space separated.

    Digits, punctuation, and symbols are dropped entirely; word order is
    preserved. Idempotent. Alphabetic means the Unicode letter category,
    so accented names survive but numeric glyphs of any kind do not.
    """
    return " ".join("".join(ch if ch.isalpha() else " " for ch in text).split())


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Return (start, end) spans of sentences.

    Boundaries fall after runs of terminal punctuation (. ! ?) followed by
    whitespace and after blank-line paragraph breaks. Whitespace-only
    segments are dropped. Deliberately coarse: clinical notes have no
    reliable sentence grammar and the consumers only need a position signal.
    """
    cuts = {m.end() for m in _TERMINAL_RE.finditer(text)}
    cuts.update(m.end() for m in _PARAGRAPH_RE.finditer(text))
    edges = sorted(cuts | {0, len(text)})
    spans = []
    for start, end in zip(edges, edges[1:]):
        if text[start:end].strip():
            spans.append((start, end))
    return spans


def tokenize(text: str) -> TokenStream:
    """Split into word tokens (letters and digits) with offsets and sentence indices."""
    spans = split_sentences(text)
    starts = [s for s, _ in spans]
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        sentence_index = bisect_right(starts, m.start()) - 1 if starts else 0
        tokens.append(Token(m.group(), m.start(), max(sentence_index, 0)))
    return TokenStream(tuple(tokens))


def ngram_counts(tokens: list[str], n: int) -> dict[tuple[str, ...], int]:
    """Multiset of n-grams over a token list."""
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts
