"""Tabular intrusion-detection data: loading, scaling, splitting, synthesis
and Dirichlet label-skew partitioning across simulated clients."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

MAX_PARTITION_ATTEMPTS = 100


class DataError(ValueError):
    """Malformed input data (bad cell, NaN, impossible request)."""


class SchemaError(DataError):
    """CSV does not have the expected columns."""


class PartitionError(DataError):
    pass


@dataclass(frozen=True)
class DatasetTable:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    # Row ids into the originally loaded table; lets partitions be reported
    # against source rows after splitting.
    row_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (features.shape[0],):
            raise DataError(
                f"{features.shape[0]} feature rows but {labels.shape} labels"
            )
        n_classes = len(self.class_names)
        if n_classes < 1:
            raise DataError("class_names must be non-empty")
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise DataError(f"labels must lie in [0, {n_classes})")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain NaN or Inf")
        row_ids = self.row_ids
        if row_ids is None:
            row_ids = np.arange(features.shape[0], dtype=np.int64)
        row_ids = np.asarray(row_ids, dtype=np.int64)
        if row_ids.shape != labels.shape:
            raise DataError("row_ids must match the number of samples")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n_samples(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return self.n_samples

    def subset(self, positions) -> DatasetTable:
        """Rows at the given positions (not row ids), order preserved."""
        positions = np.asarray(positions, dtype=np.int64)
        return DatasetTable(
            self.features[positions],
            self.labels[positions],
            self.class_names,
            self.row_ids[positions],
        )

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes).astype(np.int64)


@dataclass(frozen=True)
class ClientSplit:
    client_id: int
    train: DatasetTable
    val: DatasetTable

    def __post_init__(self):
        if len(self.train) == 0:
            raise DataError(f"client {self.client_id} has an empty training split")
        if self.train.class_names != self.val.class_names:
            raise DataError("train and val must share class_names")
        if np.intersect1d(self.train.row_ids, self.val.row_ids).size:
            raise DataError(f"client {self.client_id}: train and val overlap")


@dataclass(frozen=True)
class PartitionSpec:
    n_clients: int = 10
    alpha: float = 0.3
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie strictly between 0 and 1")


@dataclass(frozen=True)
class ScalerState:
    minimum: np.ndarray
    maximum: np.ndarray


def load_csv(path, label_column: str = "label") -> DatasetTable:
    """Read a header-row CSV with numeric feature columns and one label column.

    Labels are mapped to dense indices in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if label_column not in frame.columns:
        raise SchemaError(
            f"label column {label_column!r} not found in {path} "
            f"(columns: {', '.join(frame.columns)})"
        )
    feature_columns = [c for c in frame.columns if c != label_column]
    if not feature_columns:
        raise SchemaError(f"{path} has no feature columns")

    columns = []
    for name in feature_columns:
        raw = frame[name].str.strip()
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise DataError(
                f"{path}: row {row} (line {row + 2}), column {name!r}: "
                f"non-numeric or missing value {frame[name].iloc[row]!r}"
            )
        columns.append(values)
    features = np.column_stack(columns) if columns else np.empty((len(frame), 0))

    raw_labels = frame[label_column].str.strip().to_numpy()
    class_names = list(pd.unique(raw_labels))
    lookup = {name: i for i, name in enumerate(class_names)}
    labels = np.array([lookup[v] for v in raw_labels], dtype=np.int64)
    return DatasetTable(features, labels, tuple(str(c) for c in class_names))


def fit_scaler(train: DatasetTable) -> ScalerState:
    if len(train) == 0:
        raise DataError("cannot fit a scaler on an empty table")
    return ScalerState(train.features.min(axis=0), train.features.max(axis=0))


def apply_scaler(state: ScalerState, table: DatasetTable) -> DatasetTable:
    span = state.maximum - state.minimum
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    scaled = (table.features - state.minimum) / safe_span
    scaled = np.clip(scaled, 0.0, 1.0)
    scaled[:, constant] = 0.0
    return DatasetTable(scaled, table.labels, table.class_names, table.row_ids)


def train_test_split(
    table: DatasetTable, ratio: float = 0.8, seed: int = 0
) -> tuple[DatasetTable, DatasetTable]:
    """Stratified split; per class, round(ratio * n_c) samples go to the first part.

    A class with fewer than two samples cannot be stratified and lands whole
    in the larger part (with a warning).
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in range(table.n_classes):
        members = np.flatnonzero(table.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        if members.size < 2:
            warnings.warn(
                f"class {table.class_names[c]!r} has {members.size} sample(s); "
                "placed in the larger split",
                stacklevel=2,
            )
            (first if ratio >= 0.5 else second).append(members)
            continue
        n_first = int(np.floor(ratio * members.size + 0.5))
        n_first = min(max(n_first, 1), members.size - 1)
        first.append(members[:n_first])
        second.append(members[n_first:])
    first_idx = np.sort(np.concatenate(first)) if first else np.empty(0, np.int64)
    second_idx = np.sort(np.concatenate(second)) if second else np.empty(0, np.int64)
    return table.subset(first_idx), table.subset(second_idx)


def _deal(labels: np.ndarray, n_classes: int, n_clients: int, alpha: float, rng):
    shares: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for c in range(n_classes):
        members = rng.permutation(np.flatnonzero(labels == c))
        if members.size == 0:
            continue
        proportions = rng.dirichlet(np.full(n_clients, alpha))
        cuts = (np.cumsum(proportions)[:-1] * members.size).astype(np.int64)
        for k, chunk in enumerate(np.split(members, cuts)):
            shares[k].append(chunk)
    return [
        np.concatenate(parts) if parts else np.empty(0, np.int64) for parts in shares
    ]


def dirichlet_partition(table: DatasetTable, spec: PartitionSpec) -> list[ClientSplit]:
    """Deal each class across clients with Dirichlet(alpha) proportions.

    Every client must end up with at least one sample; failed deals are
    retried with the seed offset by the attempt number.
    """
    if len(table) < spec.n_clients:
        raise PartitionError(
            f"{len(table)} samples cannot cover {spec.n_clients} clients"
        )
    for attempt in range(MAX_PARTITION_ATTEMPTS):
        rng = np.random.default_rng(spec.seed + attempt)
        shares = _deal(table.labels, table.n_classes, spec.n_clients, spec.alpha, rng)
        if all(s.size > 0 for s in shares):
            break
    else:
        raise PartitionError(
            f"could not give all {spec.n_clients} clients a sample "
            f"after {MAX_PARTITION_ATTEMPTS} attempts (alpha={spec.alpha})"
        )

    splits = []
    for k, share in enumerate(shares):
        share = rng.permutation(share)
        n_val = min(int(np.floor(spec.val_fraction * share.size)), share.size - 1)
        val_pos = np.sort(share[:n_val])
        train_pos = np.sort(share[n_val:])
        splits.append(ClientSplit(k, table.subset(train_pos), table.subset(val_pos)))
    return splits


def partition_manifest(splits: Sequence[ClientSplit]) -> list[dict]:
    return [
        {
            "client_id": s.client_id,
            "train_indices": s.train.row_ids.tolist(),
            "val_indices": s.val.row_ids.tolist(),
        }
        for s in splits
    ]


def write_partition_manifest(splits: Sequence[ClientSplit], path) -> None:
    Path(path).write_text(json.dumps(partition_manifest(splits), indent=1))


def class_means(n_classes: int, dim: int, separation: float) -> np.ndarray:
    """Class centres with pairwise distance equal to ``separation``.

    With ``n_classes <= dim`` the centres sit on scaled coordinate axes; beyond
    that they are spread on a fixed pseudo-random set of unit directions.
    """
    if n_classes <= dim:
        means = np.zeros((n_classes, dim))
        means[np.arange(n_classes), np.arange(n_classes)] = 1.0
    else:
        directions = np.random.default_rng(0).normal(size=(n_classes, dim))
        means = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    return means * (separation / np.sqrt(2.0))


def synth_generate(
    n_classes: int,
    n_samples: int,
    dim: int,
    separation: float,
    priors: Sequence[float] | None = None,
    seed: int = 0,
) -> DatasetTable:
    """Gaussian mixture with one unit-variance spherical component per class."""
    if n_classes < 2:
        raise DataError("need at least two classes")
    if priors is None:
        priors = np.full(n_classes, 1.0 / n_classes)
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (n_classes,):
        raise DataError(f"expected {n_classes} priors, got {priors.shape[0]}")
    if np.any(priors < 0) or not np.isclose(priors.sum(), 1.0, atol=1e-9):
        raise DataError("priors must be nonnegative and sum to 1")
    if np.any(priors == 0):
        raise DataError("every class needs a positive prior")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n_samples, priors / priors.sum())
    labels = np.repeat(np.arange(n_classes), counts)
    labels = labels[rng.permutation(n_samples)]
    means = class_means(n_classes, dim, separation)
    features = means[labels] + rng.standard_normal((n_samples, dim))
    names = ("normal",) + tuple(f"attack_{c}" for c in range(1, n_classes))
    return DatasetTable(features, labels, names)
