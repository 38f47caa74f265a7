"""Datasets, deterministic splits, synthetic data, and CSV ingestion.

Feature vectors are stored unnormalized; attack code assumes a bounded
feature box, so the CLI applies min-max scaling (fit on the train split
only) at ingestion time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Malformed dataset file or impossible dataset request."""


@dataclass(frozen=True)
class Sample:
    """One labeled feature vector. Label 0 = benign, 1 = malicious."""

    features: np.ndarray
    label: int


class Dataset:
    """Immutable ordered collection of samples sharing one feature dimension."""

    def __init__(self, X, y, name: str = "dataset", schema_id: str | None = None):
        X = np.array(X, dtype=np.float64)
        y = np.array(y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"label vector length {y.shape} does not match {X.shape[0]} rows"
            )
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise DataError(f"row {bad[0]}: label must be 0 or 1, got {y[bad[0]]}")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.name = name
        self.schema_id = schema_id

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n_samples

    def sample(self, i: int) -> Sample:
        return Sample(self.X[i], int(self.y[i]))

    def subset(self, indices, name: str | None = None) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            self.X[indices],
            self.y[indices],
            name=name or self.name,
            schema_id=self.schema_id,
        )

    def malicious(self) -> "Dataset":
        """Rows with label 1 (the class an evasion attack starts from)."""
        return self.subset(np.flatnonzero(self.y == 1), name=self.name + "/malicious")

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.y == 0)), int(np.sum(self.y == 1))


def load_csv(path, feature_names: list[str] | None = None, name: str | None = None) -> Dataset:
    """Load a dataset from a comma-separated file with a header row.

    The header must contain a `label` column; all other columns are features.
    When `feature_names` is given the non-label columns must match it exactly
    (same names, same order). No normalization is applied.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise DataError(f"{path}: header has no 'label' column")
        label_col = header.index("label")
        cols = [h for i, h in enumerate(header) if i != label_col]
        if feature_names is not None:
            missing = [c for c in feature_names if c not in cols]
            extra = [c for c in cols if c not in feature_names]
            if missing or extra:
                raise DataError(
                    f"{path}: columns do not match schema "
                    f"(missing {missing}, extra {extra})"
                )
            if cols != list(feature_names):
                raise DataError(f"{path}: column order differs from schema order")
        rows, labels = [], []
        for idx, row in enumerate(reader):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {idx}: expected {len(header)} cells, got {len(row)}"
                )
            feats = []
            for j, cell in enumerate(row):
                if j == label_col:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {idx}, column '{header[j]}': "
                        f"non-numeric value {cell!r}"
                    ) from None
            lab = row[label_col].strip()
            if lab not in ("0", "1"):
                raise DataError(f"{path}: row {idx}: label must be 0 or 1, got {lab!r}")
            rows.append(feats)
            labels.append(int(lab))
    if not rows:
        raise DataError(f"{path}: no samples")
    return Dataset(np.array(rows), np.array(labels), name=name or str(path))


def write_csv(ds: Dataset, path, feature_names: list[str] | None = None) -> None:
    """Write a dataset as CSV; `repr` float formatting round-trips exactly."""
    names = feature_names or [f"f{i}" for i in range(ds.n_features)]
    if len(names) != ds.n_features:
        raise DataError(
            f"{len(names)} feature names for {ds.n_features}-dim dataset"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["label"])
        for i in range(ds.n_samples):
            writer.writerow([repr(float(v)) for v in ds.X[i]] + [str(int(ds.y[i]))])


def split(ds: Dataset, seed: int, ratios: tuple[int, int, int] = (3, 1, 1)):
    """Shuffle and partition into (train, val, test) by integer ratios.

    Sizes are floor-proportional; any remainder rows go to the train part.
    The shuffle is fully determined by `seed`.
    """
    total = sum(ratios)
    if ds.n_samples < total:
        raise DataError(
            f"need at least {total} samples to split {ratios}, got {ds.n_samples}"
        )
    n = ds.n_samples
    n_val = (n * ratios[1]) // total
    n_test = (n * ratios[2]) // total
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    return (
        ds.subset(perm[:n_train], name=ds.name + "/train"),
        ds.subset(perm[n_train : n_train + n_val], name=ds.name + "/val"),
        ds.subset(perm[n_train + n_val :], name=ds.name + "/test"),
    )


def synth(
    n_per_class: int,
    dim: int,
    separation: float,
    noise: float = 0.05,
    seed: int = 0,
    name: str = "synth",
) -> Dataset:
    """Two Gaussian blobs in [0,1]^dim, labeled by generating blob.

    `separation` is the distance between blob means in units of `noise`
    (the per-coordinate standard deviation), so separation=6 puts the means
    six sigma apart. Features are clipped to [0,1].
    """
    if n_per_class < 1:
        raise DataError(f"n_per_class must be positive, got {n_per_class}")
    if dim < 2:
        raise DataError(f"dim must be at least 2, got {dim}")
    if noise <= 0:
        raise DataError(f"noise must be positive, got {noise}")
    rng = np.random.default_rng(seed)
    direction = np.ones(dim) / np.sqrt(dim)
    offset = 0.5 * separation * noise * direction
    center = np.full(dim, 0.5)
    benign = rng.normal(center - offset, noise, size=(n_per_class, dim))
    malicious = rng.normal(center + offset, noise, size=(n_per_class, dim))
    X = np.clip(np.vstack([benign, malicious]), 0.0, 1.0)
    y = np.concatenate([np.zeros(n_per_class, int), np.ones(n_per_class, int)])
    return Dataset(X, y, name=name)


class MinMaxScaler:
    """Per-feature min-max scaling to [0,1], fit on the train split only."""

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    @classmethod
    def fit(cls, ds: Dataset) -> "MinMaxScaler":
        return cls(ds.X.min(axis=0), ds.X.max(axis=0))

    def transform(self, ds: Dataset) -> Dataset:
        span = self.hi - self.lo
        span = np.where(span > 0, span, 1.0)
        X = np.clip((ds.X - self.lo) / span, 0.0, 1.0)
        return Dataset(X, ds.y, name=ds.name, schema_id=ds.schema_id)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.array(d["lo"]), np.array(d["hi"]))
