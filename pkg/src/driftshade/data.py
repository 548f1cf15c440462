"""Labeled tabular datasets: synthetic generation, CSV ingest/export, splitting.

Feature matrices are dense float64 arrays, one row per sample. Labels are
binary: 0 = benign, 1 = malware.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CsvFormatError",
    "LabeledDataset",
    "SplitSpec",
    "generate_synthetic",
    "load_csv",
    "save_csv",
    "split_dataset",
]


class CsvFormatError(ValueError):
    """Raised when a feature CSV cannot be parsed."""


@dataclass
class LabeledDataset:
    """A feature matrix with one binary label per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ValueError(
                f"need one label per row: {self.features.shape[0]} rows, "
                f"{self.labels.shape[0]} labels"
            )
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.labels = self.labels.astype(np.int64)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.features[indices], self.labels[indices])

    def malware_rows(self) -> np.ndarray:
        return self.features[self.labels == 1]


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the shuffle seed."""

    train: float = 0.7
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train, self.val, self.test)
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)}")


def generate_synthetic(
    n_per_class: int, n_features: int, class_separation: float, seed: int
) -> LabeledDataset:
    """Two unit-covariance Gaussian blobs separated along the diagonal.

    Class means sit at +-(class_separation/2) * u where u is the normalized
    all-ones direction, so every feature carries equal signal and per-feature
    perturbation budgets are meaningful on all coordinates. Rows are ordered
    benign block then malware block; output is a pure function of the
    arguments.
    """
    if n_per_class < 2:
        raise ValueError(f"n_per_class must be >= 2, got {n_per_class}")
    if n_features < 2:
        raise ValueError(f"n_features must be >= 2, got {n_features}")
    if class_separation < 0:
        raise ValueError(f"class_separation must be >= 0, got {class_separation}")
    rng = np.random.default_rng(seed)
    offset = 0.5 * class_separation / np.sqrt(n_features)
    benign = rng.standard_normal((n_per_class, n_features)) - offset
    malware = rng.standard_normal((n_per_class, n_features)) + offset
    features = np.vstack([benign, malware])
    labels = np.repeat([0, 1], n_per_class)
    return LabeledDataset(features, labels)


def load_csv(path, has_header: bool = True) -> LabeledDataset:
    """Read a dataset CSV: d feature columns then one label column.

    Raises CsvFormatError naming the offending line for ragged rows,
    non-numeric cells, labels outside {0, 1}, or an empty file.
    """
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if len(record) == 1 and record[0].strip() == "":
                continue  # tolerate blank lines, e.g. a trailing newline
            values = []
            for cell in record:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"row {lineno}: non-numeric value {cell.strip()!r}"
                    ) from None
            if width is None:
                width = len(values)
                if width < 2:
                    raise CsvFormatError(
                        f"row {lineno}: need at least one feature column plus a label"
                    )
            elif len(values) != width:
                raise CsvFormatError(
                    f"row {lineno}: expected {width} fields, got {len(values)}"
                )
            label = values[-1]
            if label not in (0.0, 1.0):
                raise CsvFormatError(f"row {lineno}: label must be 0 or 1, got {label}")
            rows.append(values[:-1])
            labels.append(int(label))
    if not rows:
        raise CsvFormatError("no rows")
    return LabeledDataset(np.array(rows, dtype=np.float64), np.array(labels))


def save_csv(ds: LabeledDataset, path, header: bool = True) -> None:
    """Write a dataset CSV readable by load_csv (floats at full precision)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(",".join([f"f{j}" for j in range(ds.d)] + ["label"]) + "\n")
        for x, y in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in x) + f",{int(y)}\n")


def _floor(x: float) -> int:
    # guard against 0.15 * 4000 = 599.9999... style float droop
    return int(np.floor(x + 1e-9))


def _allocate_per_class(class_counts, split_size, total):
    """Largest-remainder allocation of split_size rows across classes."""
    targets = [count * split_size / total for count in class_counts]
    base = [_floor(t) for t in targets]
    short = split_size - sum(base)
    remainders = sorted(
        range(len(base)), key=lambda c: (base[c] - targets[c], c)
    )  # most under-allocated first
    for c in remainders[:short]:
        base[c] += 1
    return base


def split_dataset(
    ds: LabeledDataset, spec: SplitSpec
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Deterministic stratified split into (train, val, test).

    Split sizes are floor(n * fraction) with the remainder going to train;
    rows of each class are then spread across splits by largest remainder so
    class proportions stay close to the full dataset.
    """
    n = ds.n
    if n < 3:
        raise ValueError(f"need at least 3 rows to split, got {n}")
    n_val = _floor(n * spec.val)
    n_test = _floor(n * spec.test)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"split sizes {n_train}/{n_val}/{n_test}: every split needs >= 1 row"
        )

    classes = np.unique(ds.labels)
    class_indices = [np.flatnonzero(ds.labels == c) for c in classes]
    counts = [len(idx) for idx in class_indices]
    val_per_class = _allocate_per_class(counts, n_val, n)
    test_per_class = _allocate_per_class(counts, n_test, n)
    # repair the rare case where val + test exceed a small class
    for c in range(len(classes)):
        while val_per_class[c] + test_per_class[c] > counts[c]:
            donor = max(
                range(len(classes)),
                key=lambda k: counts[k] - val_per_class[k] - test_per_class[k],
            )
            if test_per_class[c] > 0:
                test_per_class[c] -= 1
                test_per_class[donor] += 1
            else:
                val_per_class[c] -= 1
                val_per_class[donor] += 1

    rng = np.random.default_rng(spec.seed)
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for idx, n_v, n_t in zip(class_indices, val_per_class, test_per_class):
        perm = rng.permutation(idx)
        n_tr = len(idx) - n_v - n_t
        train_idx.append(perm[:n_tr])
        val_idx.append(perm[n_tr : n_tr + n_v])
        test_idx.append(perm[n_tr + n_v :])
    order = lambda parts: np.sort(np.concatenate(parts))
    return (
        ds.subset(order(train_idx)),
        ds.subset(order(val_idx)),
        ds.subset(order(test_idx)),
    )
