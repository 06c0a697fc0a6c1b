"""Text similarity metrics: n-gram overlap F1 and TF-IDF cosine.

Both metrics tokenize through :mod:`synthnotes.textprep` and lowercase.
The vectorizer follows the fit/transform estimator convention so it also
serves as the feature extractor for the utility classifier.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import NoteRecord
from .textprep import ngram_counts, tokenize
from .validation import check_non_empty, check_positive

_space_counter = itertools.count(1)


@dataclass(frozen=True)
class RougeScore:
    n: int
    precision: float
    recall: float
    f1: float


def _metric_tokens(text: str) -> list[str]:
    return [t.surface.lower() for t in tokenize(text)]


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Multiset n-gram overlap between candidate and reference.

    overlap = sum over grams of min(candidate count, reference count);
    precision = overlap / |candidate grams|, recall = overlap / |reference
    grams|; degenerate denominators yield 0.
    """
    check_positive(n, "n")
    cand = ngram_counts(_metric_tokens(candidate), n)
    ref = ngram_counts(_metric_tokens(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items() if gram in ref)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(n, precision, recall, f1)


@dataclass(frozen=True)
class TfIdfVector:
    weights: dict[str, float]
    space_id: int

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))


class TfidfVectorizer:
    """Raw-count TF times smoothed IDF, idf = ln((1+N)/(1+df)) + 1.

    The smoothing keeps every weight finite and positive; the constant is
    fixed so vectors are reproducible across runs. Terms unseen at fit time
    vectorize to weight 0 (vocabulary closure).
    """

    def __init__(self):
        self.idf_: dict[str, float] | None = None
        self.n_docs_: int = 0
        self.space_id_: int = 0

    def get_params(self, deep: bool = True) -> dict:
        return {}

    def set_params(self, **params) -> "TfidfVectorizer":
        for key in params:
            raise ValueError(f"unknown parameter {key!r}")
        return self

    def fit(self, docs: Sequence[str]) -> "TfidfVectorizer":
        check_non_empty(docs, "docs")
        df: dict[str, int] = {}
        any_tokens = False
        for doc in docs:
            terms = set(_metric_tokens(doc))
            any_tokens = any_tokens or bool(terms)
            for term in terms:
                df[term] = df.get(term, 0) + 1
        if not any_tokens:
            raise ValueError("cannot fit on documents with no tokens")
        n = len(docs)
        self.idf_ = {term: math.log((1 + n) / (1 + count)) + 1.0 for term, count in df.items()}
        self.n_docs_ = n
        self.space_id_ = next(_space_counter)
        return self

    def _check_fitted(self):
        if self.idf_ is None:
            raise ValueError("vectorizer is not fitted")

    def transform_one(self, doc: str) -> TfIdfVector:
        self._check_fitted()
        counts: dict[str, int] = {}
        for term in _metric_tokens(doc):
            counts[term] = counts.get(term, 0) + 1
        weights = {
            term: count * self.idf_[term] for term, count in counts.items() if term in self.idf_
        }
        return TfIdfVector(weights, self.space_id_)

    def transform(self, docs: Sequence[str]) -> list[TfIdfVector]:
        return [self.transform_one(doc) for doc in docs]

    def fit_transform(self, docs: Sequence[str]) -> list[TfIdfVector]:
        return self.fit(docs).transform(docs)

    def vocabulary(self) -> list[str]:
        self._check_fitted()
        return sorted(self.idf_)


def cosine_pair(a: TfIdfVector, b: TfIdfVector) -> float:
    """Cosine of the angle between two vectors from the same fitted space."""
    if a.space_id != b.space_id:
        raise ValueError("vectors come from different fitted spaces")
    norm_a = a.norm()
    norm_b = b.norm()
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    dot = sum(w * large[t] for t, w in small.items() if t in large)
    return dot / (norm_a * norm_b)


@dataclass
class SimilarityRow:
    note_id: str
    rouge1_f1: float
    rouge2_f1: float
    rouge3_f1: float
    cosine: float


@dataclass
class SimilaritySummary:
    rows: list[SimilarityRow]
    means: dict[str, float] = field(default_factory=dict)


def similarity_summary(
    sources: Sequence[NoteRecord], synthetics: Sequence
) -> SimilaritySummary:
    """Per-pair and mean ROUGE-1/2/3 F1 and cosine, matched by source note id.

    Notes without a synthetic counterpart (generation deficits) are excluded
    from the means. The TF-IDF space is fitted over the union of matched
    source and synthetic texts.
    """
    source_by_id = {r.note_id: r for r in sources}
    matched = [(source_by_id[s.source_note_id], s) for s in synthetics if s.source_note_id in source_by_id]
    if not matched:
        raise ValueError("no synthetic note matches a source note")
    vectorizer = TfidfVectorizer()
    vectorizer.fit([r.text for r, _ in matched] + [s.text for _, s in matched])
    rows = []
    for record, synthetic in matched:
        vec_src = vectorizer.transform_one(record.text)
        vec_syn = vectorizer.transform_one(synthetic.text)
        rows.append(
            SimilarityRow(
                record.note_id,
                rouge_n(synthetic.text, record.text, 1).f1,
                rouge_n(synthetic.text, record.text, 2).f1,
                rouge_n(synthetic.text, record.text, 3).f1,
                cosine_pair(vec_syn, vec_src),
            )
        )
    count = len(rows)
    means = {
        "rouge1_f1": sum(r.rouge1_f1 for r in rows) / count,
        "rouge2_f1": sum(r.rouge2_f1 for r in rows) / count,
        "rouge3_f1": sum(r.rouge3_f1 for r in rows) / count,
        "cosine": sum(r.cosine for r in rows) / count,
        "pairs": float(count),
    }
    return SimilaritySummary(rows, means)
