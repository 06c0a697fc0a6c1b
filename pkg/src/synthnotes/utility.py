"""Downstream coding utility: train on synthetic notes, test on sources.

The cross-validation protocol partitions SOURCE note ids into near-equal
folds by seeded shuffle. Each round trains on the synthetic notes of the
other folds and tests on the held-out fold's source notes, so the score
measures how well synthetic text transfers back to real text. The feature
space is fitted on the training synthetics only; held-out text never
reaches the vectorizer or the model. A benchmark mode trains on the source
notes themselves under the same folds.

The built-in model is a one-vs-rest linear classifier trained by full-batch
gradient descent on logistic loss; deliberately small, deterministic, and
pluggable so a heavier coder can be swapped in through the same interface.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .corpus import NoteRecord
from .generation import SyntheticNote
from .simmetrics import TfidfVectorizer, TfIdfVector
from .validation import check_non_empty

logger = logging.getLogger(__name__)


def vectors_to_matrix(vectors: Sequence[TfIdfVector], vocabulary: Sequence[str]) -> sparse.csr_matrix:
    """Stack sparse term-weight maps into a CSR matrix over a fixed vocabulary."""
    index = {term: j for j, term in enumerate(vocabulary)}
    data, indices, indptr = [], [], [0]
    for vec in vectors:
        cols = sorted(index[t] for t in vec.weights if t in index)
        lookup = {index[t]: w for t, w in vec.weights.items() if t in index}
        indices.extend(cols)
        data.extend(lookup[c] for c in cols)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), indices, indptr),
        shape=(len(vectors), len(vocabulary)),
    )


class LogisticTextClassifier:
    """One-vs-rest logistic regression fit by deterministic gradient descent."""

    def __init__(self, epochs: int = 30, learning_rate: float = 0.1, l2: float = 1e-4, seed: int = 0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2 = l2
        self.seed = seed

    def get_params(self, deep: bool = True) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "l2": self.l2,
            "seed": self.seed,
        }

    def set_params(self, **params) -> "LogisticTextClassifier":
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, X: sparse.csr_matrix, y: Sequence[str]) -> "LogisticTextClassifier":
        check_non_empty(y, "y")
        if X.shape[0] != len(y):
            raise ValueError(f"X has {X.shape[0]} rows but y has {len(y)} labels")
        self.classes_ = sorted(set(y))
        if len(self.classes_) < 2:
            raise ValueError("training set contains a single class")
        class_index = {c: j for j, c in enumerate(self.classes_)}
        n, v = X.shape
        c = len(self.classes_)
        Y = np.zeros((n, c))
        for i, label in enumerate(y):
            Y[i, class_index[label]] = 1.0

        W = np.zeros((v, c))
        b = np.zeros(c)
        Xt = X.T.tocsr()
        self.loss_history_: list[float] = []
        for t in range(1, self.epochs + 1):
            lr = self.learning_rate / np.sqrt(t)
            P = expit(X @ W + b)
            grad_w = Xt @ (P - Y) / n + self.l2 * W
            grad_b = (P - Y).mean(axis=0)
            W -= lr * grad_w
            b -= lr * grad_b
            P = np.clip(expit(X @ W + b), 1e-12, 1 - 1e-12)
            loss = float(-(Y * np.log(P) + (1 - Y) * np.log(1 - P)).mean())
            self.loss_history_.append(loss)
        self.coef_ = W
        self.intercept_ = b
        return self

    def decision_function(self, X: sparse.csr_matrix) -> np.ndarray:
        return np.asarray(X @ self.coef_ + self.intercept_)

    def predict(self, X: sparse.csr_matrix) -> list[str]:
        scores = self.decision_function(X)
        return [self.classes_[j] for j in scores.argmax(axis=1)]


@dataclass
class UtilityScores:
    micro_f1: float
    macro_f1: float
    per_fold: list[dict] = field(default_factory=list)
    per_class: dict[str, dict] = field(default_factory=dict)


def evaluate_micro_macro(predictions: Sequence[tuple[str, str]]) -> dict:
    """Pooled (micro) and per-class-averaged (macro) F1 over (gold, predicted) pairs.

    Classes appearing in neither gold nor predictions are excluded from the
    macro mean.
    """
    check_non_empty(predictions, "predictions")
    classes = sorted({g for g, _ in predictions} | {p for _, p in predictions})
    per_class: dict[str, dict] = {}
    pooled_tp = pooled_fp = pooled_fn = 0
    macro_sum = 0.0
    for cls in classes:
        tp = sum(1 for g, p in predictions if g == cls and p == cls)
        fp = sum(1 for g, p in predictions if g != cls and p == cls)
        fn = sum(1 for g, p in predictions if g == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        support = tp + fn
        per_class[cls] = {"precision": precision, "recall": recall, "f1": f1, "support": support}
        pooled_tp += tp
        pooled_fp += fp
        pooled_fn += fn
        macro_sum += f1
    micro_p = pooled_tp / (pooled_tp + pooled_fp) if pooled_tp + pooled_fp else 0.0
    micro_r = pooled_tp / (pooled_tp + pooled_fn) if pooled_tp + pooled_fn else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r > 0 else 0.0
    return {"micro_f1": micro_f1, "macro_f1": macro_sum / len(classes), "per_class": per_class}


def partition_folds(ids: Sequence[str], folds: int, seed: int) -> list[list[str]]:
    """Seeded shuffle into ``folds`` near-equal parts; every id lands in exactly one."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds > len(ids):
        raise ValueError(f"cannot split {len(ids)} ids into {folds} folds")
    shuffled = sorted(ids)
    random.Random(seed).shuffle(shuffled)
    return [shuffled[i::folds] for i in range(folds)]


def crossvalidate(
    synthetics: Sequence[SyntheticNote],
    sources: Sequence[NoteRecord],
    mapping: Mapping[int, str] | None = None,
    folds: int = 10,
    seed: int = 0,
    epochs: int = 30,
    learning_rate: float = 0.1,
    l2: float = 1e-4,
    classifier_factory: Callable[[], object] | None = None,
) -> UtilityScores:
    """Synthetic-train / source-test cross-validation.

    ``mapping`` maps synthetic-note positions to source note ids; by default
    it is read off each note's source_note_id. Synthetic notes inherit their
    source's label. Raises KeyError when a synthetic maps to an unknown
    source. Folds missing a gold class log a warning; the class simply drops
    out of that fold's macro mean.
    """
    check_non_empty(sources, "sources")
    check_non_empty(synthetics, "synthetics")
    source_by_id = {r.note_id: r for r in sources}
    if mapping is None:
        mapping = {i: s.source_note_id for i, s in enumerate(synthetics)}
    for i in range(len(synthetics)):
        if mapping[i] not in source_by_id:
            raise KeyError(f"synthetic note {i} maps to unknown source {mapping[i]!r}")
    if classifier_factory is None:
        classifier_factory = lambda: LogisticTextClassifier(epochs, learning_rate, l2, seed)

    all_classes = sorted({r.icd9_label for r in sources})
    fold_ids = partition_folds([r.note_id for r in sources], folds, seed)
    per_fold: list[dict] = []
    pooled_pairs: list[tuple[str, str]] = []
    for fold_number, held_out in enumerate(fold_ids):
        held = set(held_out)
        train_texts = []
        train_labels = []
        for i, note in enumerate(synthetics):
            source_id = mapping[i]
            if source_id not in held:
                train_texts.append(note.text)
                train_labels.append(source_by_id[source_id].icd9_label)
        test_records = [source_by_id[note_id] for note_id in held_out]

        missing = set(all_classes) - set(r.icd9_label for r in test_records)
        if missing:
            logger.warning(
                "fold %d is missing gold class(es) %s; they drop from its macro mean",
                fold_number, sorted(missing),
            )

        # Feature space is fitted on the training synthetics only.
        vectorizer = TfidfVectorizer().fit(train_texts)
        vocabulary = vectorizer.vocabulary()
        X_train = vectors_to_matrix(vectorizer.transform(train_texts), vocabulary)
        X_test = vectors_to_matrix(vectorizer.transform([r.text for r in test_records]), vocabulary)
        model = classifier_factory()
        model.fit(X_train, train_labels)
        predicted = model.predict(X_test)
        pairs = [(r.icd9_label, p) for r, p in zip(test_records, predicted)]
        pooled_pairs.extend(pairs)
        scores = evaluate_micro_macro(pairs)
        per_fold.append(
            {"fold": fold_number, "micro_f1": scores["micro_f1"], "macro_f1": scores["macro_f1"]}
        )

    pooled = evaluate_micro_macro(pooled_pairs)
    return UtilityScores(
        micro_f1=sum(f["micro_f1"] for f in per_fold) / len(per_fold),
        macro_f1=sum(f["macro_f1"] for f in per_fold) / len(per_fold),
        per_fold=per_fold,
        per_class=pooled["per_class"],
    )


def benchmark_crossvalidate(
    sources: Sequence[NoteRecord],
    folds: int = 10,
    seed: int = 0,
    epochs: int = 30,
    learning_rate: float = 0.1,
    l2: float = 1e-4,
    classifier_factory: Callable[[], object] | None = None,
) -> UtilityScores:
    """Same protocol, but the training set is the source notes themselves."""
    pseudo = [SyntheticNote(r.note_id, "benchmark", "source", r.text) for r in sources]
    return crossvalidate(
        pseudo, sources, None, folds, seed, epochs, learning_rate, l2, classifier_factory
    )
