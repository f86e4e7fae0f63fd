"""Per-client data meta-features and validation performance, and the two
scores (data quality, model performance) that feed client utility."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from amafed.dataio import DatasetTable
from amafed.metrics import classification_metrics, confusion
from amafed.model import ModelParams, predict


@dataclass(frozen=True)
class MetaFeatures:
    class_histogram: tuple[int, ...]
    malicious_ratio: float
    class_entropy: float
    rare_class_coverage: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_histogram"] = list(self.class_histogram)
        return d


@dataclass(frozen=True)
class PerfMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    @classmethod
    def neutral(cls) -> PerfMetrics:
        return cls(0.5, 0.5, 0.5, 0.5, 0.5, 0.5)

    def to_dict(self) -> dict:
        return asdict(self)


def rare_classes(global_histogram) -> np.ndarray:
    """Boolean mask of classes whose global share is below 1/(2C)."""
    hist = np.asarray(global_histogram, dtype=np.float64)
    share = hist / hist.sum()
    return share < 1.0 / (2 * hist.size)


def extract_meta_features(
    train: DatasetTable, global_histogram, normal_class: int = 0
) -> MetaFeatures:
    global_histogram = np.asarray(global_histogram)
    if len(train) == 0:
        raise ValueError("cannot extract meta-features from an empty split")
    if global_histogram.shape != (train.n_classes,):
        raise ValueError("global histogram must have one entry per class")
    hist = train.class_histogram()
    p = hist / hist.sum()
    n_classes = hist.size
    if n_classes > 1:
        nz = p[p > 0]
        entropy = float(-(nz * np.log(nz)).sum() / np.log(n_classes))
        entropy = min(max(entropy, 0.0), 1.0)
    else:
        entropy = 0.0
    rare = rare_classes(global_histogram)
    coverage = np.count_nonzero(rare & (hist > 0)) / max(1, np.count_nonzero(rare))
    return MetaFeatures(
        class_histogram=tuple(int(h) for h in hist),
        malicious_ratio=float(1.0 - p[normal_class]),
        class_entropy=entropy,
        rare_class_coverage=float(coverage),
    )


def score_data(x: MetaFeatures) -> float:
    return 0.5 * x.class_entropy + 0.5 * x.rare_class_coverage


def score_perf(p: PerfMetrics) -> float:
    return (p.accuracy + (1.0 - p.fpr) + (1.0 - p.fnr)) / 3.0


def perf_from_predictions(predictions, labels, n_classes: int) -> PerfMetrics:
    report = classification_metrics(confusion(predictions, labels, n_classes))
    return PerfMetrics(
        accuracy=report.accuracy,
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        fpr=report.fpr,
        fnr=report.fnr,
    )


def evaluate_client(
    params: ModelParams, val: DatasetTable, previous: PerfMetrics | None = None
) -> PerfMetrics:
    """Validation metrics of ``params``; an empty split carries ``previous``
    forward (neutral 0.5 metrics when there is none)."""
    if len(val) == 0:
        return previous if previous is not None else PerfMetrics.neutral()
    return perf_from_predictions(predict(params, val.features), val.labels, val.n_classes)
