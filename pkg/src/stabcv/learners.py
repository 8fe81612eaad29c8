"""Learners tuned by the selection engine: ridge, sparse ridge, CART.

A learner is any object with a ``name``, a ``fit(X, y, theta)`` method
returning a model with ``predict(X)``, and a ``default_grid(n, p)``
method. Hyperparameters are frozen, ordered dataclasses; their field
order is the tie-breaking order used by every argmin.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DataError, SparsityError

GAMMA_RANGE = (1e-3, 1e3)
N_GAMMA = 20


def _positive(name, v):
    if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be a positive finite number, got {v!r}")


@dataclass(frozen=True, order=True)
class RidgeParams:
    gamma: float

    def __post_init__(self):
        _positive("gamma", self.gamma)
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True, order=True)
class SparseRidgeParams:
    tau: int
    gamma: float

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise SparsityError(f"tau must be an integer >= 1, got {self.tau!r}")
        _positive("gamma", self.gamma)
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True, order=True)
class CartParams:
    max_depth: int
    min_samples_split: int

    def __post_init__(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ConfigError(f"max_depth must be an integer >= 1, got {self.max_depth!r}")
        if int(self.min_samples_split) != self.min_samples_split or self.min_samples_split < 2:
            raise ConfigError(
                f"min_samples_split must be an integer >= 2, got {self.min_samples_split!r}")
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "min_samples_split", int(self.min_samples_split))


@dataclass(frozen=True, order=True)
class ConstantParams:
    value: float


@dataclass(frozen=True, order=True)
class MeanParams:
    shrink: float


@dataclass(frozen=True)
class HyperGrid:
    """Axis-aligned grid. Axes are listed in coordinate-descent sweep order."""

    axes: tuple
    init: object

    def __post_init__(self):
        axes = tuple((str(name), tuple(values)) for name, values in self.axes)
        if not axes:
            raise ConfigError("grid needs at least one axis")
        fields = {f.name for f in dataclasses.fields(self.init)}
        for name, values in axes:
            if name not in fields:
                raise ConfigError(f"axis {name!r} is not a field of {type(self.init).__name__}")
            if not values:
                raise ConfigError(f"axis {name!r} is empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigError(f"axis {name!r} must be strictly increasing")
            if getattr(self.init, name) not in values:
                raise ConfigError(f"initial {name}={getattr(self.init, name)!r} is not on the grid")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def build(cls, init, **axes) -> HyperGrid:
        return cls(tuple(axes.items()), init)

    @property
    def names(self):
        return [name for name, _ in self.axes]

    @property
    def size(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    def points(self):
        names = self.names
        for combo in itertools.product(*(v for _, v in self.axes)):
            yield dataclasses.replace(self.init, **dict(zip(names, combo)))

    def line(self, theta, axis):
        """All grid points that differ from ``theta`` only along ``axis``."""
        values = dict(self.axes)[axis]
        return [dataclasses.replace(theta, **{axis: v}) for v in values]


# --------------------------------------------------------------------------
# fitted models

@dataclass(frozen=True, eq=False)
class LinearModel:
    learner: str
    coef: np.ndarray
    n_train: int

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef

    @property
    def support(self):
        return np.flatnonzero(self.coef)

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.coef))


@dataclass(frozen=True, eq=False)
class TreeModel:
    learner: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_train: int
    n_features: int | None = None

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return _kernels.predict_tree(self.feature, self.threshold, self.left, self.right,
                                     self.value, X)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def sparsity(self) -> int:
        return self.n_leaves

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)


@dataclass(frozen=True, eq=False)
class ConstantModel:
    learner: str
    value: float
    n_train: int

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value)

    @property
    def sparsity(self) -> int:
        return 0


def predict(model, features):
    """Predict for one feature vector (returns a float) or a matrix of rows."""
    x = np.asarray(features, dtype=float)
    p = _model_dim(model)
    if x.shape[-1] != p and p is not None:
        raise DataError(f"model expects {p} features, got {x.shape[-1]}")
    if x.ndim == 1:
        return float(model.predict(x[None, :])[0])
    return model.predict(x)


def _model_dim(model):
    if isinstance(model, LinearModel):
        return model.coef.size
    return getattr(model, "n_features", None)


# --------------------------------------------------------------------------
# ridge and sparse ridge

def ridge_coef(X, y, gamma):
    """Solve (X'X + I/gamma) b = X'y, through the n x n dual when p > n."""
    n, p = X.shape
    if n == 0:
        return np.zeros(p)
    lam = 1.0 / gamma
    if p <= n:
        A = X.T @ X
        A[np.diag_indices_from(A)] += lam
        return np.linalg.solve(A, X.T @ y)
    K = X @ X.T
    K[np.diag_indices_from(K)] += lam
    return X.T @ np.linalg.solve(K, y)


def sparse_ridge_objective(X, y, coef, gamma):
    r = X @ coef - y
    return 0.5 * float(coef @ coef) / gamma + 0.5 * float(r @ r)


def _swap_pass(X, y, support, gamma, xty, colsq):
    """One pass of best-swap local search over the support slots.

    Maximizes b_S' A_S^{-1} b_S (A_S = X_S'X_S + I/gamma, b_S = X_S'y),
    which is equivalent to minimizing the ridge-refit objective.
    """
    p = X.shape[1]
    lam = 1.0 / gamma
    support = list(support)
    swaps = 0
    for slot in range(len(support)):
        i = support[slot]
        rest = support[:slot] + support[slot + 1:]
        in_s = np.zeros(p, dtype=bool)
        in_s[support] = True
        cand = np.flatnonzero(~in_s)
        if cand.size == 0:
            break
        cols = np.concatenate(([i], cand))
        if rest:
            XR = X[:, rest]
            A = XR.T @ XR
            A[np.diag_indices_from(A)] += lam
            b = xty[rest]
            C = XR.T @ X[:, cols]
            sol = np.linalg.solve(A, np.column_stack((b, C)))
            w, Z = sol[:, 0], sol[:, 1:]
            num = xty[cols] - C.T @ w
            schur = colsq[cols] + lam - np.einsum("ij,ij->j", C, Z)
        else:
            num = xty[cols]
            schur = colsq[cols] + lam
        gain = num * num / schur
        j = int(np.argmax(gain[1:]))
        if gain[1 + j] > gain[0] + 1e-12 * abs(gain[0]):
            support[slot] = int(cand[j])
            swaps += 1
            if swaps >= p:
                break
    return sorted(support)


def fit_ridge_arrays(X, y, gamma):
    return LinearModel("ridge", ridge_coef(X, y, gamma), X.shape[0])


def fit_sparse_ridge_arrays(X, y, tau, gamma):
    n, p = X.shape
    if tau > p:
        raise SparsityError(f"tau={tau} exceeds the number of features p={p}")
    if tau >= p:
        return LinearModel("sparse_ridge", ridge_coef(X, y, gamma), n)
    coef = np.zeros(p)
    if n == 0:
        return LinearModel("sparse_ridge", coef, n)
    full = ridge_coef(X, y, gamma)
    colsq = np.einsum("ij,ij->j", X, X)
    rank = np.abs(full) * np.sqrt(colsq)
    support = sorted(np.argsort(-rank, kind="stable")[:tau].tolist())
    support = _swap_pass(X, y, support, gamma, X.T @ y, colsq)
    coef[support] = ridge_coef(X[:, support], y, gamma)
    return LinearModel("sparse_ridge", coef, n)


# --------------------------------------------------------------------------
# CART

def fit_cart_arrays(X, y, max_depth, min_samples_split):
    n = X.shape[0]
    if n == 0:
        raise DataError("cannot grow a tree on an empty training set")
    X = np.ascontiguousarray(X, dtype=float)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        yy = y[idx]
        mean = float(yy.mean())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(mean)
        if depth >= max_depth or idx.size < min_samples_split or np.all(yy == yy[0]):
            return node
        f, t, q = _kernels.best_split(X[idx], yy)
        if f < 0:
            return node
        sse = float(np.sum((yy - mean) ** 2))
        gain = q - float(yy.sum()) ** 2 / idx.size
        if not gain > 1e-12 * sse:
            return node
        go_left = X[idx, f] <= t
        feature[node] = f
        threshold[node] = t
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    model = TreeModel("cart", np.array(feature, dtype=np.int64), np.array(threshold),
                      np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                      np.array(value), n, X.shape[1])
    return model


# --------------------------------------------------------------------------
# learner objects

def gamma_axis(lo=GAMMA_RANGE[0], hi=GAMMA_RANGE[1], num=N_GAMMA):
    return tuple(float(g) for g in np.logspace(math.log10(lo), math.log10(hi), num))


def max_tau(n, p=None) -> int:
    """Largest tau >= 1 with tau * ln(tau) <= n, capped at p."""
    tau = 1
    while (tau + 1) * math.log(tau + 1) <= n:
        tau += 1
    return tau if p is None else max(1, min(tau, p))


class RidgeLearner:
    name = "ridge"
    params = RidgeParams

    def fit(self, X, y, theta):
        return fit_ridge_arrays(X, y, theta.gamma)

    def default_grid(self, n, p):
        gammas = gamma_axis()
        return HyperGrid.build(RidgeParams(gammas[len(gammas) // 2]), gamma=gammas)


class SparseRidgeLearner:
    name = "sparse_ridge"
    params = SparseRidgeParams

    def fit(self, X, y, theta):
        return fit_sparse_ridge_arrays(X, y, theta.tau, theta.gamma)

    def default_grid(self, n, p):
        gammas = gamma_axis()
        taus = tuple(range(1, max_tau(n, p) + 1))
        init = SparseRidgeParams(taus[0], gammas[len(gammas) // 2])
        return HyperGrid.build(init, tau=taus, gamma=gammas)


class CartLearner:
    name = "cart"
    params = CartParams

    def fit(self, X, y, theta):
        return fit_cart_arrays(X, y, theta.max_depth, theta.min_samples_split)

    def default_grid(self, n, p):
        return HyperGrid.build(CartParams(5, 2), min_samples_split=tuple(range(2, 11)),
                               max_depth=tuple(range(1, 11)))


class ConstantLearner:
    """Ignores the training data entirely; its stability is always zero."""

    name = "constant"
    params = ConstantParams

    def fit(self, X, y, theta):
        return ConstantModel("constant", float(theta.value), X.shape[0])

    def default_grid(self, n, p):
        return HyperGrid.build(ConstantParams(0.0), value=(-1.0, 0.0, 1.0))


class MeanLearner:
    """Predicts ``shrink * mean(y_train)`` regardless of the features."""

    name = "mean"
    params = MeanParams

    def fit(self, X, y, theta):
        m = float(np.mean(y)) if len(y) else 0.0
        return ConstantModel("mean", theta.shrink * m, X.shape[0])

    def default_grid(self, n, p):
        return HyperGrid.build(MeanParams(1.0), shrink=(0.0, 0.5, 1.0))


LEARNERS = {cls.name: cls() for cls in
            (RidgeLearner, SparseRidgeLearner, CartLearner, ConstantLearner, MeanLearner)}


def get_learner(learner):
    if isinstance(learner, str):
        try:
            return LEARNERS[learner]
        except KeyError:
            raise ConfigError(f"unknown learner {learner!r}; choose from {sorted(LEARNERS)}") from None
    return learner


def default_grid(learner, train_shape) -> HyperGrid:
    n, p = train_shape
    if n < 1 or p < 1:
        raise ConfigError(f"grid needs n, p >= 1, got {train_shape}")
    return get_learner(learner).default_grid(n, p)


def fit(learner, data, theta):
    return get_learner(learner).fit(data.X, data.y, theta)


def fit_ridge(train, gamma):
    _positive("gamma", gamma)
    return fit_ridge_arrays(train.X, train.y, gamma)


def fit_sparse_ridge(train, tau, gamma):
    theta = SparseRidgeParams(tau, gamma)
    return fit_sparse_ridge_arrays(train.X, train.y, theta.tau, theta.gamma)


def fit_cart(train, max_depth, min_samples_split):
    theta = CartParams(max_depth, min_samples_split)
    return fit_cart_arrays(train.X, train.y, theta.max_depth, theta.min_samples_split)
