"""Datasets, fold partitions, the loss, and summary metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FoldCountError, MetricDomainError


@dataclass(frozen=True)
class Standardization:
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0

    def inverse_features(self, X):
        return np.asarray(X) * self.x_scale + self.x_mean

    def inverse_response(self, y):
        return np.asarray(y) * self.y_scale + self.y_mean


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    standardization: Standardization | None = None
    name: str = ""

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError(f"features must be a 2-d array, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} responses")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"dataset needs n >= 1 and p >= 1, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite entries")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.standardization, self.name)


@dataclass(frozen=True, eq=False)
class FoldPartition:
    """Assignment of each of ``n`` samples to one of ``k`` folds."""

    k: int
    assignment: np.ndarray
    seed: int | None = None
    _folds: tuple = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).copy()
        if a.ndim != 1 or a.size == 0:
            raise FoldCountError("fold assignment must be a non-empty vector")
        if self.k < 2 or self.k > a.size:
            raise FoldCountError(f"need 2 <= k <= n, got k={self.k}, n={a.size}")
        if a.min() < 0 or a.max() >= self.k:
            raise FoldCountError(f"fold indices must lie in [0, {self.k})")
        a.flags.writeable = False
        folds = tuple(np.flatnonzero(a == j) for j in range(self.k))
        if any(f.size == 0 for f in folds):
            raise FoldCountError("every fold must be non-empty")
        for f in folds:
            f.flags.writeable = False
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "_folds", folds)

    @classmethod
    def from_folds(cls, folds, n=None) -> FoldPartition:
        n = sum(len(f) for f in folds) if n is None else n
        a = np.full(n, -1, dtype=np.int64)
        for j, f in enumerate(folds):
            a[np.asarray(f, dtype=np.intp)] = j
        if (a < 0).any():
            raise FoldCountError("folds do not cover every sample")
        return cls(len(folds), a)

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def folds(self) -> tuple:
        """Sorted index arrays, one per fold."""
        return self._folds

    def sizes(self) -> list[int]:
        return [f.size for f in self._folds]

    def is_balanced(self) -> bool:
        return len(set(self.sizes())) == 1

    def train_size(self) -> int:
        """Typical number of training points when one fold is held out."""
        return self.n - round(self.n / self.k)


def make_folds(n: int, k: int, seed: int) -> FoldPartition:
    """Seeded random partition of ``range(n)`` into ``k`` balanced folds.

    After shuffling, the first ``n % k`` folds receive one extra sample.
    """
    n, k = int(n), int(k)
    if k < 2 or k > n:
        raise FoldCountError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    assignment = np.empty(n, dtype=np.int64)
    start = 0
    for j in range(k):
        size = base + (1 if j < extra else 0)
        assignment[perm[start:start + size]] = j
        start += size
    return FoldPartition(k, assignment, seed)


def _check_finite(ds: Dataset):
    if not (np.all(np.isfinite(ds.X)) and np.all(np.isfinite(ds.y))):
        raise DataError("cannot standardize non-finite data")


def standardize(train: Dataset, others=(), response: bool = True):
    """Center and scale ``train`` by its own column statistics.

    Uses the (n-1)-denominator standard deviation; constant columns get
    scale 1. Every dataset in ``others`` is transformed with the same
    coefficients. With ``response=False`` the response is left untouched.
    """
    _check_finite(train)
    if train.n < 2:
        raise DataError("standardization needs at least 2 training rows")
    mean = train.X.mean(axis=0)
    scale = train.X.std(axis=0, ddof=1)
    scale = np.where(scale > 0, scale, 1.0)
    if response:
        y_mean = float(train.y.mean())
        y_scale = float(train.y.std(ddof=1))
        if not y_scale > 0:
            y_scale = 1.0
    else:
        y_mean, y_scale = 0.0, 1.0
    coef = Standardization(mean, scale, y_mean, y_scale)

    def apply(ds):
        _check_finite(ds)
        if ds.p != train.p:
            raise DataError(f"expected {train.p} features, got {ds.p}")
        return Dataset((ds.X - mean) / scale, (ds.y - y_mean) / y_scale, coef, ds.name)

    return apply(train), [apply(o) for o in others]


@dataclass(frozen=True)
class LossFn:
    kind: str = "squared_error"
    bound_M: float | None = None

    def __post_init__(self):
        if self.kind != "squared_error":
            raise ValueError(f"unsupported loss {self.kind!r}")
        if self.bound_M is not None and self.bound_M < 0:
            raise ValueError("loss bound M must be non-negative")

    def __call__(self, y, yhat):
        d = np.asarray(yhat, dtype=float) - np.asarray(y, dtype=float)
        return d * d


SQUARED_ERROR = LossFn()


@dataclass(frozen=True)
class MetricSummary:
    per_dataset_ratios: list
    geometric_mean: float
    cv_test_gap: dict = field(default_factory=dict)
    agreement: float | None = None


def geometric_mean(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise MetricDomainError("geometric mean of an empty list")
    if not np.all(v > 0) or not np.all(np.isfinite(v)):
        raise MetricDomainError("geometric mean needs strictly positive finite values")
    return float(np.exp(np.mean(np.log(v))))


def geometric_mean_ratio(pairs) -> MetricSummary:
    """Per-pair MSE ratios candidate/baseline and their geometric mean."""
    ratios = []
    for cand, base in pairs:
        if not (cand > 0 and base > 0) or not (math.isfinite(cand) and math.isfinite(base)):
            raise MetricDomainError(f"MSEs must be positive and finite, got ({cand}, {base})")
        ratios.append(cand / base)
    return MetricSummary(ratios, geometric_mean(ratios))


def load_csv(path, response=-1, header: bool = True, name: str | None = None) -> Dataset:
    """Read a numeric CSV; ``response`` is a column name or integer index."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if any(c.strip() for c in r)]
    names = None
    if header:
        if not rows:
            raise DataError(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    if isinstance(response, str) and not response.lstrip("-").isdigit():
        if names is None or response not in names:
            raise DataError(f"{path}: no column named {response!r}")
        col = names.index(response)
    else:
        col = int(response)
        if not -width <= col < width:
            raise DataError(f"{path}: response column {col} out of range")
        col %= width
    if width < 2:
        raise DataError(f"{path}: need a response and at least one feature column")
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        line = first_line + r
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            try:
                v = float(cell.strip())
            except ValueError:
                raise DataError(f"{path}: row {line}: non-numeric cell {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {line}: non-finite cell {cell!r}")
            values[r, c] = v
    X = np.delete(values, col, axis=1)
    return Dataset(X, values[:, col], name=name or path.stem)
