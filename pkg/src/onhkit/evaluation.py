"""Fold protocol and performance metrics: Venetian-blind k-fold, confusion
counts, accuracy/sensitivity/specificity, ROC sweep with trapezoid AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORMAL, GLAUCOMA = 0, 1


@dataclass(frozen=True)
class FoldPlan:
    """Per-sample fold assignment for k-fold cross-validation."""

    k: int
    assignments: np.ndarray

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary outcome counts; the positive class is glaucoma."""

    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.tn, self.fp) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep points (threshold, fpr, tpr) and the trapezoid AUC."""

    points: list
    auc: float


def venetian_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Assign samples to k folds class by class, round-robin after a shuffle.

    Within each class the shuffled sample at position j lands in fold j mod k,
    so per-class fold sizes differ by at most one.
    """
    labels = np.asarray(labels, dtype=int)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    assignments = np.full(labels.shape[0], -1, dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ValueError(f"class {cls} has {idx.size} samples, fewer than k={k}")
        rng.shuffle(idx)
        assignments[idx] = np.arange(idx.size) % k
    return FoldPlan(k=k, assignments=assignments)


def confusion(preds, truth) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if preds.shape != truth.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {truth.shape}")
    return ConfusionMatrix(
        tp=int(np.sum((preds == GLAUCOMA) & (truth == GLAUCOMA))),
        fn=int(np.sum((preds == NORMAL) & (truth == GLAUCOMA))),
        tn=int(np.sum((preds == NORMAL) & (truth == NORMAL))),
        fp=int(np.sum((preds == GLAUCOMA) & (truth == NORMAL))),
    )


def metrics(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity) as fractions in [0, 1].

    Raises on a zero denominator rather than silently reporting 0.
    """
    if cm.total == 0:
        raise ValueError("accuracy undefined: no samples")
    if cm.tp + cm.fn == 0:
        raise ValueError("sensitivity undefined: no positive samples")
    if cm.tn + cm.fp == 0:
        raise ValueError("specificity undefined: no negative samples")
    accuracy = (cm.tp + cm.tn) / cm.total
    sensitivity = cm.tp / (cm.tp + cm.fn)
    specificity = cm.tn / (cm.tn + cm.fp)
    return accuracy, sensitivity, specificity


def roc_auc(scores, truth) -> RocCurve:
    """Sweep thresholds over the distinct scores (positive when score >= t).

    The curve starts at a sentinel (+inf, 0, 0) and necessarily ends at
    (1, 1); ties move fpr and tpr together, so the trapezoid area equals
    the pairwise rank statistic with ties counted at half weight.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=int)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")
    n_pos = int(np.sum(truth == GLAUCOMA))
    n_neg = int(np.sum(truth == NORMAL))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC requires both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truth = truth[order]
    points = [(np.inf, 0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        t = sorted_scores[i]
        while i < n and sorted_scores[i] == t:
            if sorted_truth[i] == GLAUCOMA:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((float(t), fp / n_neg, tp / n_pos))

    auc = 0.0
    for (_, f0, t0), (_, f1, t1) in zip(points, points[1:]):
        auc += (f1 - f0) * (t0 + t1) / 2.0
    return RocCurve(points=points, auc=auc)


def classify_at(scores, threshold: float) -> np.ndarray:
    """Label glaucoma when score >= threshold (inclusive)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return (np.asarray(scores, dtype=float) >= threshold).astype(int)


def fold_stats(values) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 denominator) over folds."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("need at least 2 values for fold statistics")
    return float(values.mean()), float(values.std(ddof=1))


def epoch_split(pool, frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Random disjoint train/validation split of an index pool.

    The train size is frac*N rounded half up, then clamped so both sides
    stay non-empty.
    """
    pool = np.asarray(pool, dtype=int)
    if pool.size < 2:
        raise ValueError("pool must contain at least 2 samples")
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must lie strictly between 0 and 1")
    shuffled = pool.copy()
    rng.shuffle(shuffled)
    n_train = int(np.floor(frac * pool.size + 0.5))
    n_train = min(max(n_train, 1), pool.size - 1)
    return shuffled[:n_train], shuffled[n_train:]


def percent_1dp(fraction: float) -> str:
    """Format a fraction as a percentage with one decimal, halves up."""
    return f"{np.floor(fraction * 1000.0 + 0.5) / 10.0:.1f}"


def roc_to_csv(curve: RocCurve) -> str:
    lines = ["threshold,fpr,tpr"]
    for t, fpr, tpr in curve.points:
        lines.append(f"{t:.6f},{fpr:.6f},{tpr:.6f}")
    lines.append(f"auc,{curve.auc:.6f}")
    return "\n".join(lines) + "\n"


def fold_metrics_to_csv(rows: list[dict]) -> str:
    """Per-fold metric rows plus mean and sd summary rows.

    Each row carries fold, accuracy, sensitivity, specificity, auc.
    """
    cols = ("accuracy", "sensitivity", "specificity", "auc")
    lines = ["fold,accuracy,sensitivity,specificity,auc"]
    for row in rows:
        lines.append(
            "{},{:.6f},{:.6f},{:.6f},{:.6f}".format(row["fold"], *(row[c] for c in cols))
        )
    for stat, pick in (("mean", 0), ("sd", 1)):
        vals = [fold_stats([row[c] for row in rows])[pick] for c in cols]
        lines.append(("{}," + ",".join(["{:.6f}"] * len(cols))).format(stat, *vals))
    return "\n".join(lines) + "\n"
