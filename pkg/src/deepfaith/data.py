"""Datasets: CSV ingestion, standardization, splitting and a synthetic task.

An instance is an ``(n, d)`` float array of ``n`` elements with ``d``-dimensional
blocks. Tabular rows use ``d = 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "as_instance",
    "load_csv",
    "synth_linear",
    "split_indices",
]


def as_instance(x) -> np.ndarray:
    """Coerce ``x`` to a finite ``(n, d)`` float array (1-d input gets ``d = 1``)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"instance must be an (n, d) grid, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("instance has non-finite entries")
    return x


def split_indices(count: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split into disjoint, sorted train/test index arrays."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    order = np.random.default_rng(seed).permutation(count)
    n_test = int(round(test_fraction * count))
    return np.sort(order[n_test:]), np.sort(order[:n_test])


@dataclass(frozen=True)
class Dataset:
    instances: np.ndarray  # (N, n, d)
    labels: np.ndarray  # (N,)
    feature_means: np.ndarray  # (n * d,) before standardization
    feature_stds: np.ndarray  # (n * d,) before standardization; 1 for constant columns
    train_idx: np.ndarray
    test_idx: np.ndarray
    feature_names: tuple[str, ...] = ()
    split_seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.instances.ndim != 3:
            raise ValueError("instances must be an (N, n, d) array")
        if len(self.instances) != len(self.labels):
            raise ValueError("instances and labels differ in length")
        if not np.all(np.isfinite(self.instances)):
            raise ValueError("dataset has non-finite entries")
        self.instances.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.instances.shape[1]

    @property
    def d(self) -> int:
        return self.instances.shape[2]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def X_train(self) -> np.ndarray:
        return self.instances[self.train_idx]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def X_test(self) -> np.ndarray:
        return self.instances[self.test_idx]

    @property
    def y_test(self) -> np.ndarray:
        return self.labels[self.test_idx]

    def train_mean(self) -> np.ndarray:
        """Per-element training mean, shaped like an instance."""
        return self.X_train.mean(axis=0)

    def resplit(self, test_fraction: float = 0.2, seed: int = 0) -> "Dataset":
        tr, te = split_indices(len(self), test_fraction, seed)
        return replace(self, train_idx=tr, test_idx=te, split_seed=seed)


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scores. Constant columns pass through unchanged (shift 0, scale 1)."""
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    const = ~(stds > 0)
    means = np.where(const, 0.0, means)
    stds = np.where(const, 1.0, stds)
    return (X - means) / stds, means, stds


def load_csv(
    path,
    target_column: str,
    standardize: bool = True,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> Dataset:
    """Read a headed CSV of numeric columns; every non-target column is a feature.

    Integer-valued targets are used as class indices directly; any other
    target values are mapped to indices in sorted order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        if target_column not in header:
            raise ValueError(f"unknown target column {target_column!r}; columns are {header}")
        t_col = header.index(target_column)
        rows, targets = [], []
        for r, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"row {r}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(f"row {r}, column {header[c]!r}: non-numeric cell {cell!r}") from None
            targets.append(vals.pop(t_col))
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path} has a header but no data rows")
    X = np.asarray(rows, dtype=float)
    t = np.asarray(targets)
    if np.all(t == np.round(t)) and t.min() >= 0:
        y = t.astype(int)
    else:
        _, y = np.unique(t, return_inverse=True)
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if len(X) > 1 else np.zeros(X.shape[1])
    stds = np.where(stds > 0, stds, 1.0)
    if standardize:
        X, means, stds = _standardize(X)
    tr, te = split_indices(len(X), test_fraction, seed)
    names = tuple(h for i, h in enumerate(header) if i != t_col)
    return Dataset(
        instances=X[:, :, None],
        labels=y,
        feature_means=means,
        feature_stds=stds,
        train_idx=tr,
        test_idx=te,
        feature_names=names,
        split_seed=seed,
        meta={"source": str(path), "target_column": target_column, "standardized": bool(standardize)},
    )


def synth_linear(n: int, num_samples: int, seed: int, test_fraction: float = 0.2) -> tuple[Dataset, np.ndarray]:
    """Uniform[0, 1] features labelled by a nonnegative linear score threshold.

    The threshold is the score of the distribution centre (all features 0.5),
    so classes are balanced in expectation. Returns the dataset and the
    coefficient vector.
    """
    if n < 2:
        raise ValueError("synth_linear needs n >= 2")
    if num_samples < 1:
        raise ValueError("synth_linear needs num_samples >= 1")
    rng = np.random.default_rng(seed)
    coefs = rng.uniform(0.1, 1.0, size=n)
    X = rng.uniform(0.0, 1.0, size=(num_samples, n))
    y = (X @ coefs > 0.5 * coefs.sum()).astype(int)
    stds = X.std(axis=0, ddof=1) if num_samples > 1 else np.ones(n)
    tr, te = split_indices(num_samples, test_fraction, seed)
    ds = Dataset(
        instances=X[:, :, None],
        labels=y,
        feature_means=X.mean(axis=0),
        feature_stds=np.where(stds > 0, stds, 1.0),
        train_idx=tr,
        test_idx=te,
        feature_names=tuple(f"x{i}" for i in range(n)),
        split_seed=seed,
        meta={"source": "synth_linear", "n": n, "num_samples": num_samples, "seed": seed},
    )
    return ds, coefs
