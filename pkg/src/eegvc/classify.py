"""KNN and linear SVM anxiety classifiers, metrics, and the channel-configuration harness."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .features import anova_select


class LeakageError(RuntimeError):
    """Test rows were used to fit standardisation or feature selection."""


# ---------------------------------------------------------------- preprocessing


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def _guard(fit_rows: np.ndarray, test_rows: np.ndarray) -> None:
    if __debug__ and np.intersect1d(fit_rows, test_rows).size:
        raise LeakageError(f"fit rows overlap test rows: {np.intersect1d(fit_rows, test_rows)[:5].tolist()}")


# ---------------------------------------------------------------- KNN


def knn_predict(train_x, train_y, query, k: int = 5) -> tuple[int, float]:
    """Majority vote of the ``k`` nearest training rows (Euclidean).

    Returns ``(label, score)`` with score the fraction of positive neighbours.
    Vote ties go to the nearest neighbour's label.
    """
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y).astype(int)
    if train_x.shape[0] == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= train_x.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {train_x.shape[0]}]")
    d = np.sqrt(((train_x - np.asarray(query, dtype=float)) ** 2).sum(axis=1))
    nearest = np.argsort(d, kind="stable")[:k]
    pos = int(train_y[nearest].sum())
    if 2 * pos > k:
        label = 1
    elif 2 * pos < k:
        label = 0
    else:
        label = int(train_y[nearest[0]])
    return label, pos / k


# ---------------------------------------------------------------- SVM


@dataclass
class LinearSVM:
    weight: np.ndarray
    bias: float

    def decision_function(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weight + self.bias

    def predict(self, x) -> np.ndarray:
        return (self.decision_function(x) >= 0).astype(int)


def svm_train(x, y, lam: float = 1e-2, epochs: int = 100, seed: int = 0) -> LinearSVM:
    """Pegasos: hinge loss + (lam/2)|w|^2, step 1/(lam t), one seeded pass per epoch.

    ``y`` uses {-1, +1}. The bias is learned as the weight of a constant
    input column and so is regularised with the rest.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y).tolist()) != {-1.0, 1.0}:
        raise ValueError("svm_train needs both classes, labelled -1 and +1")
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    w = np.zeros(xa.shape[1])
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(xa.shape[0]):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * xa[i]
    return LinearSVM(weight=w[:-1].copy(), bias=float(w[-1]))


# ---------------------------------------------------------------- metrics


@dataclass
class ClassReport:
    accuracy: float
    precision: float | None  # None when nothing was predicted positive
    recall: float | None  # None when there are no positive labels
    auc: float | None  # None when only one class is present
    tp: int
    fp: int
    tn: int
    fn: int
    config: str = ""
    classifier: str = ""


def auc_score(scores, labels) -> float | None:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        return None
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))


def classifier_metrics(pred_labels, scores, true_labels, config: str = "", classifier: str = "") -> ClassReport:
    p = np.asarray(pred_labels).astype(int)
    y = np.asarray(true_labels).astype(int)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("predictions and labels must have equal non-zero length")
    tp = int(((p == 1) & (y == 1)).sum())
    fp = int(((p == 1) & (y == 0)).sum())
    tn = int(((p == 0) & (y == 0)).sum())
    fn = int(((p == 0) & (y == 1)).sum())
    return ClassReport(
        accuracy=(tp + tn) / y.size,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / (tp + fn) if tp + fn else None,
        auc=auc_score(scores, y),
        tp=tp, fp=fp, tn=tn, fn=fn, config=config, classifier=classifier,
    )


# ---------------------------------------------------------------- experiments


def split_train_test(groups, labels, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified group-level split: whole subjects go to either side.

    Each subject must carry a single label. Returns row indices.
    """
    groups = np.asarray(groups)
    labels = np.asarray(labels).astype(int)
    subj_label: dict = {}
    for g, l in zip(groups.tolist(), labels.tolist()):
        if subj_label.setdefault(g, l) != l:
            raise ValueError(f"subject {g} has mixed labels")
    rng = np.random.default_rng(seed)
    test_subjects = set()
    for cls in (0, 1):
        subjects = sorted(s for s, l in subj_label.items() if l == cls)
        if len(subjects) < 2:
            raise ValueError(f"class {cls} needs at least 2 subjects to split")
        order = rng.permutation(len(subjects))
        n_test = min(max(1, round(test_fraction * len(subjects))), len(subjects) - 1)
        test_subjects.update(subjects[i] for i in order[:n_test])
    is_test = np.array([g in test_subjects for g in groups.tolist()])
    return np.flatnonzero(~is_test), np.flatnonzero(is_test)


@dataclass
class ExperimentRow:
    report: ClassReport
    n_train: int
    n_test: int
    seed: int
    n_selected: int


def run_channel_experiments(features: Mapping[str, np.ndarray], labels, groups, split_seed: int = 0,
                            k: int = 5, svm_lambda: float = 1e-2, svm_epochs: int = 100,
                            p_threshold: float = 0.05) -> list[ExperimentRow]:
    """For each named feature matrix: standardise and ANOVA-select on the training
    rows only, then fit KNN and SVM and score the held-out rows.

    All configurations share one subject-level split.
    """
    labels = np.asarray(labels).astype(int)
    train_idx, test_idx = split_train_test(groups, labels, 0.2, split_seed)
    rows = []
    for name, x in features.items():
        x = np.asarray(x, dtype=float)
        if x.shape[0] != labels.size:
            raise ValueError(f"configuration {name!r} has {x.shape[0]} rows, expected {labels.size}")
        _guard(train_idx, test_idx)
        scaler = Standardizer.fit(x[train_idx])
        xs = scaler.transform(x)
        sel = anova_select(xs[train_idx], labels[train_idx], p_threshold).selected
        xtr, xte = xs[train_idx][:, sel], xs[test_idx][:, sel]
        ytr, yte = labels[train_idx], labels[test_idx]

        knn = [knn_predict(xtr, ytr, q, min(k, len(ytr))) for q in xte]
        rep = classifier_metrics([p for p, _ in knn], [s for _, s in knn], yte, name, "KNN")
        rows.append(ExperimentRow(rep, len(train_idx), len(test_idx), split_seed, int(sel.sum())))

        svm = svm_train(xtr, 2 * ytr - 1, svm_lambda, svm_epochs, split_seed)
        rep = classifier_metrics(svm.predict(xte), svm.decision_function(xte), yte, name, "SVM")
        rows.append(ExperimentRow(rep, len(train_idx), len(test_idx), split_seed, int(sel.sum())))
    return rows


RESULTS_HEADER = ["config", "classifier", "accuracy", "precision", "recall", "auc", "n_train", "n_test", "seed"]


def _fmt(v: float | None) -> str:
    return "undefined" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def write_results_csv(rows: Sequence[ExperimentRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in rows:
            c = r.report
            w.writerow([c.config, c.classifier, _fmt(c.accuracy), _fmt(c.precision), _fmt(c.recall),
                        _fmt(c.auc), r.n_train, r.n_test, r.seed])
