"""Keyphrase extraction and cloze-prompt assembly.

Two independent extractors run over each document:

* A statistical extractor scoring terms by casing, position, frequency,
  context diversity, and sentence dispersion (lower score = better), with
  phrase scores combined from member-term scores.
* A frequency/position extractor keeping maximal stopword-free word runs
  that appear at least ``lasf`` times and first occur within the first
  ``cutoff`` words, boosting multi-word runs (higher score = better).

Their top-k outputs are merged (statistical extractor first), near
duplicates are withdrawn by normalized Levenshtein similarity, and the
survivors are rendered into a fill-in-the-blanks prompt in document order.

Conventions fixed here so results are reproducible and testable:

* A term is an eligible candidate member iff it is purely alphabetic and
  not a stopword; digit-bearing tokens act as phrase boundaries.
* Candidates never cross sentence boundaries or intervening punctuation.
* Term identity is case-insensitive; uppercase statistics count occurrences
  whose surface starts uppercase (``tf_upper``, length > 1, not all-caps)
  or is fully uppercase (``tf_acronym``, length > 1).
* Context windows span one adjacent token on each side, within the same
  punctuation-free run. A ratio with no observations is 0.
* Term-frequency mean/stddev (population) are taken over eligible terms;
  the frequency ceiling ``max_tf`` over all terms.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .textprep import TokenStream, split_sentences, tokenize
from .validation import check_in_unit_interval

DEFAULT_DEDUP_THRESHOLD = 0.85
DEFAULT_MAX_NGRAM = 3
DEFAULT_LASF = 3
DEFAULT_CUTOFF = 400
DEFAULT_ALPHA = 2.3
DEFAULT_SIGMA = 3.0
DEFAULT_BLANK = "____"


@dataclass(frozen=True)
class Keyphrase:
    surface: str
    score: float
    source: str  # "yake" | "kpminer"
    first_offset: int


@dataclass(frozen=True)
class ClozePrompt:
    phrases: tuple[Keyphrase, ...]
    blank: str
    rendered: str


@dataclass(frozen=True)
class TermFeatures:
    tf: int
    tf_upper: int
    tf_acronym: int
    median_sentence_index: float
    distinct_left_ratio: float
    distinct_right_ratio: float
    sentence_frequency: int
    case_weight: float
    position_weight: float
    frequency_weight: float
    relatedness_weight: float
    dispersion_weight: float
    term_score: float


@lru_cache(maxsize=None)
def _bundled_stopwords() -> frozenset[str]:
    text = resources.files("synthnotes.data").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.split() if w.strip())


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Bundled English stopword list, or one word per line from ``path``."""
    if path is None:
        return _bundled_stopwords()
    words = Path(path).read_text(encoding="utf-8").split()
    return frozenset(w.strip().lower() for w in words if w.strip())


def _blocks(stream: TokenStream, text: str) -> list[list[int]]:
    """Runs of token indices with no sentence break or punctuation inside."""
    blocks: list[list[int]] = []
    current: list[int] = []
    for i, tok in enumerate(stream.tokens):
        if current:
            prev = stream.tokens[current[-1]]
            gap = text[prev.start + len(prev.surface) : tok.start]
            if tok.sentence_index != prev.sentence_index or gap.strip():
                blocks.append(current)
                current = []
        current.append(i)
    if current:
        blocks.append(current)
    return blocks


def _eligible(surface: str, stopwords: frozenset[str]) -> bool:
    return surface.isalpha() and surface.lower() not in stopwords


def compute_term_features(doc: str, stopwords: frozenset[str] | None = None) -> dict[str, TermFeatures]:
    """Per-term statistics for the statistical extractor, keyed by lowercased term."""
    stopwords = _bundled_stopwords() if stopwords is None else stopwords
    stream = tokenize(doc)
    if not len(stream):
        return {}
    sentence_count = max(len(split_sentences(doc)), 1)
    blocks = _blocks(stream, doc)

    occurrences: dict[str, list[int]] = {}
    for i, tok in enumerate(stream.tokens):
        occurrences.setdefault(tok.surface.lower(), []).append(i)

    left: dict[str, list[str]] = {}
    right: dict[str, list[str]] = {}
    for block in blocks:
        for j, i in enumerate(block):
            term = stream.tokens[i].surface.lower()
            if j > 0:
                left.setdefault(term, []).append(stream.tokens[block[j - 1]].surface.lower())
            if j < len(block) - 1:
                right.setdefault(term, []).append(stream.tokens[block[j + 1]].surface.lower())

    tfs = {term: len(occ) for term, occ in occurrences.items()}
    max_tf = max(tfs.values())
    eligible_tfs = [tf for term, tf in tfs.items() if _eligible_term(term, occurrences, stream, stopwords)]
    if eligible_tfs:
        mean_tf = statistics.fmean(eligible_tfs)
        std_tf = statistics.pstdev(eligible_tfs)
    else:
        mean_tf, std_tf = 0.0, 0.0

    features: dict[str, TermFeatures] = {}
    for term, occ in occurrences.items():
        tf = len(occ)
        surfaces = [stream.tokens[i].surface for i in occ]
        tf_upper = sum(1 for s in surfaces if len(s) > 1 and s[0].isupper() and not s.isupper())
        tf_acronym = sum(1 for s in surfaces if len(s) > 1 and s.isupper())
        sentence_indices = [stream.tokens[i].sentence_index for i in occ]
        median_sentence = float(statistics.median(sentence_indices))
        lefts = left.get(term, [])
        rights = right.get(term, [])
        dl = len(set(lefts)) / len(lefts) if lefts else 0.0
        dr = len(set(rights)) / len(rights) if rights else 0.0
        sf = len(set(sentence_indices))

        case_w = max(tf_upper, tf_acronym) / (1.0 + math.log(tf))
        position_w = math.log(math.log(3.0 + median_sentence))
        denom = mean_tf + std_tf
        frequency_w = tf / denom if denom > 0 else 0.0
        relatedness_w = 1.0 + (dl + dr) * tf / max_tf
        dispersion_w = sf / sentence_count
        score = (relatedness_w * position_w) / (
            case_w + frequency_w / relatedness_w + dispersion_w / relatedness_w
        )
        features[term] = TermFeatures(
            tf, tf_upper, tf_acronym, median_sentence, dl, dr, sf,
            case_w, position_w, frequency_w, relatedness_w, dispersion_w, score,
        )
    return features


def _eligible_term(term, occurrences, stream, stopwords):
    first = stream.tokens[occurrences[term][0]].surface
    return _eligible(first, stopwords)


def default_top_k(token_count: int) -> int:
    """Phrase budget: a tenth of the document, clamped to [10, 60]."""
    return min(60, max(10, math.ceil(0.1 * token_count)))


def yake_extract(
    doc: str,
    max_ngram: int = DEFAULT_MAX_NGRAM,
    top_k: int | None = None,
    stopwords: frozenset[str] | None = None,
) -> list[Keyphrase]:
    """Statistical extraction; lower scores rank first.

    Candidates are stopword-free n-grams (n <= max_ngram) that do not cross
    sentence or punctuation boundaries. Ties break on first offset, then
    lexicographically.
    """
    if max_ngram < 1:
        raise ValueError("max_ngram must be >= 1")
    stopwords = _bundled_stopwords() if stopwords is None else stopwords
    stream = tokenize(doc)
    if not len(stream):
        return []
    if top_k is None:
        top_k = default_top_k(len(stream))
    features = compute_term_features(doc, stopwords)
    blocks = _blocks(stream, doc)

    # key -> [tf, first_offset, surface at first occurrence]
    candidates: dict[tuple[str, ...], list] = {}
    for block in blocks:
        for n in range(1, max_ngram + 1):
            for start in range(len(block) - n + 1):
                idxs = block[start : start + n]
                toks = [stream.tokens[i] for i in idxs]
                if not all(_eligible(t.surface, stopwords) for t in toks):
                    continue
                key = tuple(t.surface.lower() for t in toks)
                begin = toks[0].start
                end = toks[-1].start + len(toks[-1].surface)
                if key in candidates:
                    candidates[key][0] += 1
                else:
                    candidates[key] = [1, begin, doc[begin:end]]

    scored: list[Keyphrase] = []
    for key, (tf_phrase, first_offset, surface) in candidates.items():
        term_scores = [features[t].term_score for t in key]
        product = math.prod(term_scores)
        score = product / (tf_phrase * (1.0 + sum(term_scores)))
        scored.append(Keyphrase(surface, score, "yake", first_offset))
    scored.sort(key=lambda p: (p.score, p.first_offset, p.surface.lower()))
    return scored[:top_k]


def kpminer_extract(
    doc: str,
    lasf: int = DEFAULT_LASF,
    cutoff: int = DEFAULT_CUTOFF,
    alpha: float = DEFAULT_ALPHA,
    sigma: float = DEFAULT_SIGMA,
    top_k: int | None = None,
    stopwords: frozenset[str] | None = None,
) -> list[Keyphrase]:
    """Frequency/position extraction; higher scores rank first.

    Candidates are maximal stopword/punctuation-free word runs. A candidate
    survives iff it occurs >= lasf times and its first occurrence starts
    within the first ``cutoff`` words. Multi-word candidates are boosted by
    B = min(sigma, N_d / (P_d * alpha)) where N_d counts all surviving
    candidate occurrences and P_d the multi-word ones; single words keep
    boost 1.
    """
    if lasf < 1:
        raise ValueError("lasf must be >= 1")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    stopwords = _bundled_stopwords() if stopwords is None else stopwords
    stream = tokenize(doc)
    if not len(stream):
        return []
    if top_k is None:
        top_k = default_top_k(len(stream))

    # key -> [tf, first_word_index, first_offset, surface]
    candidates: dict[tuple[str, ...], list] = {}
    for block in _blocks(stream, doc):
        run: list[int] = []
        for i in block + [None]:  # sentinel flushes the last run
            if i is not None and _eligible(stream.tokens[i].surface, stopwords):
                run.append(i)
                continue
            if run:
                toks = [stream.tokens[j] for j in run]
                key = tuple(t.surface.lower() for t in toks)
                begin = toks[0].start
                end = toks[-1].start + len(toks[-1].surface)
                if key in candidates:
                    candidates[key][0] += 1
                else:
                    candidates[key] = [1, run[0], begin, doc[begin:end]]
            run = []

    surviving = {
        key: row
        for key, row in candidates.items()
        if row[0] >= lasf and row[1] < cutoff
    }
    if not surviving:
        return []
    n_d = sum(row[0] for row in surviving.values())
    p_d = sum(row[0] for key, row in surviving.items() if len(key) > 1)
    boost = min(sigma, n_d / (p_d * alpha)) if p_d > 0 else 1.0

    scored = [
        Keyphrase(surface, tf * (boost if len(key) > 1 else 1.0), "kpminer", first_offset)
        for key, (tf, _, first_offset, surface) in surviving.items()
    ]
    scored.sort(key=lambda p: (-p.score, p.first_offset, p.surface.lower()))
    return scored[:top_k]


def levenshtein(a: str, b: str) -> int:
    """Edit distance via the classic two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """Normalized similarity: 1 - dist / max(len); 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def dedup_phrases(
    phrases: Sequence[Keyphrase],
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
    case_sensitive: bool = False,
) -> list[Keyphrase]:
    """Greedy near-duplicate withdrawal in rank order.

    A phrase is dropped when its similarity with any already-kept phrase
    reaches the threshold, so the output is pairwise below it. Idempotent.
    """
    check_in_unit_interval(threshold, "threshold", open_low=True)
    kept: list[Keyphrase] = []
    for phrase in phrases:
        a = phrase.surface if case_sensitive else phrase.surface.lower()
        duplicate = False
        for other in kept:
            b = other.surface if case_sensitive else other.surface.lower()
            if similarity(a, b) >= threshold:
                duplicate = True
                break
        if not duplicate:
            kept.append(phrase)
    return kept


def merge_phrases(yake_phrases: Sequence[Keyphrase], kpminer_phrases: Sequence[Keyphrase]) -> list[Keyphrase]:
    """Union of both extractors' output, statistical extractor ranked first."""
    return list(yake_phrases) + list(kpminer_phrases)


def scrub_phrases(phrases: Sequence[Keyphrase], surfaces: Iterable[str]) -> list[Keyphrase]:
    """Drop phrases that contain any of the given surfaces (case-insensitive)."""
    needles = [s.lower() for s in surfaces if s]
    if not needles:
        return list(phrases)
    return [p for p in phrases if not any(n in p.surface.lower() for n in needles)]


def floor_phrases(
    phrases: Sequence[Keyphrase], weights: dict[str, float], floor: float
) -> list[Keyphrase]:
    """Keep phrases whose best member-term weight reaches the floor."""
    kept = []
    for p in phrases:
        member_weights = [weights.get(t.lower(), 0.0) for t in p.surface.split()]
        if member_weights and max(member_weights) >= floor:
            kept.append(p)
    return kept


def build_cloze(doc: str, phrases: Sequence[Keyphrase], blank: str = DEFAULT_BLANK) -> ClozePrompt:
    """Render deduplicated phrases as a fill-in-the-blanks prompt.

    Phrases appear in document order, each followed by the blank marker; a
    trailing blank closes the prompt.
    """
    if not phrases:
        raise ValueError("no keywords extracted")
    offsets = [p.first_offset for p in phrases]
    if len(set(offsets)) != len(offsets):
        raise ValueError("phrases with identical first offsets cannot be ordered")
    ordered = tuple(sorted(phrases, key=lambda p: p.first_offset))
    rendered = " ".join(f"{p.surface} {blank}" for p in ordered)
    return ClozePrompt(ordered, blank, rendered)


def extract_keyphrases(
    doc: str,
    *,
    max_ngram: int = DEFAULT_MAX_NGRAM,
    top_k: int | None = None,
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD,
    lasf: int = DEFAULT_LASF,
    cutoff: int = DEFAULT_CUTOFF,
    alpha: float = DEFAULT_ALPHA,
    sigma: float = DEFAULT_SIGMA,
    stopwords: frozenset[str] | None = None,
    exclude_surfaces: Iterable[str] = (),
    tfidf_weights: dict[str, float] | None = None,
    tfidf_floor: float | None = None,
) -> list[Keyphrase]:
    """Full per-document extraction: both extractors, merge, scrub, dedup."""
    yake_phrases = yake_extract(doc, max_ngram, top_k, stopwords)
    kp_phrases = kpminer_extract(doc, lasf, cutoff, alpha, sigma, top_k, stopwords)
    merged = merge_phrases(yake_phrases, kp_phrases)
    merged = scrub_phrases(merged, exclude_surfaces)
    if tfidf_floor is not None and tfidf_weights is not None:
        merged = floor_phrases(merged, tfidf_weights, tfidf_floor)
    deduped = dedup_phrases(merged, dedup_threshold)
    # Distinct phrases can still share a first offset (a word and the longer
    # run it opens); keep the best-ranked one so the cloze ordering is total.
    by_offset: dict[int, Keyphrase] = {}
    for phrase in deduped:
        by_offset.setdefault(phrase.first_offset, phrase)
    return list(by_offset.values())
