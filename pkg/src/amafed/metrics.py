"""Confusion-matrix classification metrics and fleet-level robustness statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    tpr: float
    # Per-class one-vs-rest values, length C; classes outside the averaging
    # set (no support and never predicted) are NaN.
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    per_class_fpr: np.ndarray

    @property
    def fnr(self) -> float:
        return 1.0 - self.recall

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "tpr": self.tpr,
        }


@dataclass(frozen=True)
class FleetStats:
    values: tuple[float, ...]
    mean: float
    minimum: float
    p5: float
    median: float
    iqr: float

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "min": self.minimum,
            "p5": self.p5,
            "median": self.median,
            "iqr": self.iqr,
        }


def confusion(predictions, labels, n_classes: int) -> np.ndarray:
    """C x C counts; entry [i, j] is true class i predicted as j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    for name, arr in (("label", labels), ("prediction", predictions)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} out of range [0, {n_classes})")
    flat = np.bincount(labels * n_classes + predictions, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def classification_metrics(cm) -> MetricReport:
    """Accuracy plus macro one-vs-rest precision/recall/F1/FPR/TPR.

    Macro means run over classes that occur in the labels or the
    predictions; a predicted-but-absent class scores 0.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    fp = predicted - tp
    fn = support - tp
    tn = total - tp - fp - fn

    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    fpr = _ratio(fp, fp + tn)

    active = (support > 0) | (predicted > 0)

    def macro(values):
        return float(values[active].mean())

    def masked(values):
        return np.where(active, values, np.nan)

    return MetricReport(
        accuracy=float(tp.sum() / total),
        precision=macro(precision),
        recall=macro(recall),
        f1=macro(f1),
        fpr=macro(fpr),
        tpr=macro(recall),
        per_class_precision=masked(precision),
        per_class_recall=masked(recall),
        per_class_f1=masked(f1),
        per_class_fpr=masked(fpr),
    )


def fleet_stats(per_client_f1) -> FleetStats:
    values = np.asarray(per_client_f1, dtype=np.float64)
    if values.size == 0:
        raise ValueError("no client scores")
    p5, p25, median, p75 = np.percentile(values, [5, 25, 50, 75])
    return FleetStats(
        values=tuple(float(v) for v in values),
        mean=float(values.mean()),
        minimum=float(values.min()),
        p5=float(p5),
        median=float(median),
        iqr=float(p75 - p25),
    )


def ecdf(values) -> list[tuple[float, float]]:
    """Right-continuous step points (x, fraction of values <= x)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("ecdf of an empty sample")
    xs, counts = np.unique(values, return_counts=True)
    cumulative = np.cumsum(counts)
    return [(float(x), float(c / values.size)) for x, c in zip(xs, cumulative)]
