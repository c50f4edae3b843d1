"""Labeled data representation, CSV ingestion, preprocessing and stratified splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeds import derive_seed


class DataError(ValueError):
    """Unusable input data: parse failures, degenerate classes, bad cells."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """An n x p feature matrix with integer class labels in {1..G}.

    Immutable after construction; safe to share across workers.  `label_map`
    records the raw-value -> encoded-label mapping produced by CSV ingestion
    so encoded labels can be decoded back to their raw form.
    """

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    feature_names: tuple[str, ...] | None = None
    label_map: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labs = np.asarray(self.labels, dtype=np.int64).ravel()
        if feats.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {feats.shape}")
        n, p = feats.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if labs.shape[0] != n:
            raise DataError(f"{labs.shape[0]} labels for {n} rows")
        if not np.all(np.isfinite(feats)):
            i, j = np.argwhere(~np.isfinite(feats))[0]
            raise DataError(f"non-finite feature at row {i + 1}, column {j + 1}")
        g = int(labs.max())
        if labs.min() < 1:
            raise DataError("labels must be integers in 1..G")
        present = np.unique(labs)
        if present.size != g:
            missing = sorted(set(range(1, g + 1)) - set(present.tolist()))
            raise DataError(f"classes {missing} have no rows")
        if self.feature_names is not None and len(self.feature_names) != p:
            raise DataError(f"{len(self.feature_names)} feature names for p={p}")
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "labels", _readonly(labs))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max())

    def class_rows(self, k: int) -> np.ndarray:
        """Row indices of class k, in original row order."""
        return np.flatnonzero(self.labels == k)

    def take(self, rows: np.ndarray, name: str | None = None) -> "LabeledDataset":
        """Sub-dataset of the given rows (order preserved)."""
        return LabeledDataset(
            self.features[rows],
            self.labels[rows],
            name=name or self.name,
            feature_names=self.feature_names,
            label_map=self.label_map,
        )

    def decode_labels(self) -> list[str]:
        """Raw label values for every row, via the retained encoding map."""
        if self.label_map is None:
            return [str(v) for v in self.labels]
        inverse = {enc: raw for raw, enc in self.label_map}
        return [inverse[int(v)] for v in self.labels]


@dataclass(frozen=True)
class SplitPlan:
    """Seeded 2/3-1/3 style split request for one replication."""

    train_fraction: float = 2.0 / 3.0
    seed: int = 0
    replication_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.replication_index < 0:
            raise ValueError("replication_index must be nonnegative")

    @property
    def derived_seed(self) -> int:
        return derive_seed(self.seed, self.replication_index)


@dataclass(frozen=True)
class ClassMembership:
    """Zero/one membership indicators with per-class counts and proportions."""

    indicators: np.ndarray
    counts: np.ndarray
    proportions: np.ndarray


def load_csv(path: str | Path, label_column: str) -> LabeledDataset:
    """Load a UTF-8 comma-separated file with a header row into a dataset.

    Labels are re-encoded to contiguous integers 1..G following the sorted
    order of the distinct raw values (numeric sort when every raw value
    parses as a number, lexicographic otherwise); the raw-to-encoded map is
    retained on the dataset.  Row order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for r, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(f"{path}: row {r} has {len(record)} cells, expected {len(header)}")
            raw_labels.append(record[label_idx])
            vals = []
            for i, cell in enumerate(record):
                if i == label_idx:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: cannot parse cell at row {r}, column {header[i]!r}: {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")

    distinct = sorted(set(raw_labels), key=_label_sort_key(raw_labels))
    if len(distinct) < 2:
        raise DataError(f"{path}: fewer than 2 classes (found {distinct})")
    encoding = {raw: k for k, raw in enumerate(distinct, start=1)}
    labels = np.array([encoding[r] for r in raw_labels], dtype=np.int64)
    counts = np.bincount(labels, minlength=len(distinct) + 1)[1:]
    small = [distinct[k] for k in range(len(distinct)) if counts[k] < 2]
    if small:
        raise DataError(f"{path}: classes {small} have fewer than 2 rows")
    return LabeledDataset(
        np.asarray(rows, dtype=float),
        labels,
        name=path.stem,
        feature_names=feature_names,
        label_map=tuple(sorted(encoding.items(), key=lambda kv: kv[1])),
    )


def _label_sort_key(raw_labels):
    try:
        for v in set(raw_labels):
            float(v)
    except ValueError:
        return lambda s: s
    return lambda s: float(s)


def save_csv(ds: LabeledDataset, path: str | Path, label_column: str = "label") -> None:
    """Write a dataset in the load_csv format (header row, label column last)."""
    path = Path(path)
    names = ds.feature_names or tuple(f"f{j + 1}" for j in range(ds.p))
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [label_column])
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])


def normalize_log_median(ds: LabeledDataset) -> LabeledDataset:
    """Log-transform every cell, then center each row by its own median."""
    feats = ds.features
    bad = np.argwhere(feats <= 0)
    if bad.size:
        i, j = bad[0]
        raise DataError(
            f"log-median normalization needs strictly positive values; "
            f"row {i + 1}, column {j + 1} is {feats[i, j]}"
        )
    logged = np.log(feats)
    centered = logged - np.median(logged, axis=1, keepdims=True)
    return LabeledDataset(
        centered,
        ds.labels,
        name=f"{ds.name}-logmedian",
        feature_names=ds.feature_names,
        label_map=ds.label_map,
    )


def class_membership(ds: LabeledDataset) -> ClassMembership:
    """Indicator matrix w, class counts n_k and observed proportions n_k/n."""
    g = ds.n_classes
    w = (ds.labels[:, None] == np.arange(1, g + 1)[None, :]).astype(np.int64)
    counts = w.sum(axis=0)
    return ClassMembership(_readonly(w), _readonly(counts), _readonly(counts / ds.n))


def split_indices(ds: LabeledDataset, plan: SplitPlan) -> tuple[np.ndarray, np.ndarray]:
    """The (train, test) row index sets of the stratified split.

    Per class k, exactly ceil(train_fraction * n_k) rows go to train, chosen
    by a seeded uniform shuffle of that class's row indices.  Identical
    (seed, replication_index) pairs give identical index sets.
    """
    rng = np.random.default_rng(plan.derived_seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for k in range(1, ds.n_classes + 1):
        rows = ds.class_rows(k)
        n_k = rows.size
        n_train = math.ceil(plan.train_fraction * n_k)
        if n_train < 1 or n_train >= n_k:
            raise DataError(
                f"class {k} with {n_k} rows yields an empty train or test part "
                f"at fraction {plan.train_fraction}"
            )
        perm = rng.permutation(n_k)
        train_idx.append(rows[perm[:n_train]])
        test_idx.append(rows[perm[n_train:]])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split(ds: LabeledDataset, plan: SplitPlan) -> tuple[LabeledDataset, LabeledDataset]:
    """Class-stratified train/test split; a pure function of (ds, plan)."""
    train_rows, test_rows = split_indices(ds, plan)
    return (
        ds.take(train_rows, name=f"{ds.name}-train"),
        ds.take(test_rows, name=f"{ds.name}-test"),
    )
