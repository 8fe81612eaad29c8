"""Cross-validation with a stability penalty, and nested selection of its weight.

Every fitted model is reduced to its loss vector over all ``n`` points of
the selection data; those vectors are what the fold errors and the
stability terms are computed from, and what :class:`FitCache` memoizes.
"""

from __future__ import annotations

import dataclasses
import json
import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import SQUARED_ERROR, FoldPartition, make_folds
from .errors import ConfigError, FitError, StabCVError
from .learners import default_grid, get_learner

SCHEMA = "stabcv-report/1"


def default_lambda_grid(include_zero=False):
    grid = [float(v) for v in np.logspace(-4, 4, 10)]
    return [0.0] + grid if include_zero else grid


def _finite_or_inf(x):
    x = float(x)
    return x if math.isfinite(x) else math.inf


class FitCache:
    """Loss vectors of fitted models, keyed by (training index set, theta).

    ``fits`` counts actual learner calls. With ``enabled=False`` nothing is
    stored, so every request refits.
    """

    def __init__(self, learner, data, loss=SQUARED_ERROR, enabled=True):
        self.learner = get_learner(learner)
        self.data = data
        self.loss = loss
        self.enabled = enabled
        self.fits = 0
        self.max_loss = 0.0
        self._store = {}
        self._lock = threading.Lock()

    def losses(self, train_idx, theta, fold=None):
        key = (train_idx.tobytes(), theta)
        if self.enabled:
            hit = self._store.get(key)
            if hit is not None:
                return hit
        X, y = self.data.X, self.data.y
        try:
            model = self.learner.fit(X[train_idx], y[train_idx], theta)
            values = np.asarray(self.loss(y, model.predict(X)), dtype=float)
        except StabCVError as exc:
            if isinstance(exc, FitError):
                raise
            raise FitError(str(exc), fold) from exc
        except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            raise FitError(f"{type(exc).__name__}: {exc}", fold) from exc
        values.flags.writeable = False
        with self._lock:
            self.fits += 1
            finite = values[np.isfinite(values)]
            if finite.size:
                self.max_loss = max(self.max_loss, float(finite.max()))
            if self.enabled:
                values = self._store.setdefault(key, values)
        return values


@dataclass(frozen=True, eq=False)
class CVEvaluation:
    theta: object
    partial_errors: np.ndarray
    cv_error: float
    stability: float | None
    fit_count: int


def regularized_score(ev: CVEvaluation, lam: float) -> float:
    """``cv_error + lam * stability``; ``lam = 0`` returns ``cv_error`` exactly."""
    if not lam >= 0:
        raise ConfigError(f"stability weight must be >= 0, got {lam}")
    if lam == 0:
        return ev.cv_error
    if ev.stability is None:
        raise ConfigError("evaluation was computed without stability")
    return ev.cv_error + lam * ev.stability


class _FullContext:
    """k-fold evaluation on the whole selection dataset."""

    def __init__(self, cache: FitCache, folds: FoldPartition):
        self.cache = cache
        self.folds = folds
        self.all_idx = np.arange(folds.n)
        self.train = [np.flatnonzero(folds.assignment != j) for j in range(folds.k)]
        self._records = {}

    def evaluate(self, theta, with_stability=False) -> CVEvaluation:
        before = self.cache.fits
        rec = self._records.get(theta)
        if rec is None:
            fold_losses = [self.cache.losses(self.train[j], theta, fold=j)
                           for j in range(self.folds.k)]
            partial = np.array([float(np.sum(L[idx]))
                                for L, idx in zip(fold_losses, self.folds.folds)])
            total = 0.0
            for h in partial:
                total += h
            rec = {"losses": fold_losses, "partial": partial, "cv": float(total / self.folds.n),
                   "stability": None}
            self._records[theta] = rec
        if with_stability and rec["stability"] is None:
            full = self.cache.losses(self.all_idx, theta, fold=None)
            rec["stability"] = max(float(np.mean(np.abs(L - full))) for L in rec["losses"])
        return CVEvaluation(theta, rec["partial"], rec["cv"],
                            rec["stability"] if with_stability else None,
                            self.cache.fits - before)

    def score(self, theta, lam):
        if lam == 0:
            return self.evaluate(theta).cv_error
        return regularized_score(self.evaluate(theta, True), lam)


class _InnerContext:
    """Inner search data for outer fold ``t``: everything but fold ``t``."""

    def __init__(self, cache: FitCache, folds: FoldPartition, t: int):
        a = folds.assignment
        self.cache = cache
        self.t = t
        self.rest = np.flatnonzero(a != t)
        self.outer = folds.folds[t]
        self.inner = [(t2, folds.folds[t2], np.flatnonzero((a != t) & (a != t2)))
                      for t2 in range(folds.k) if t2 != t]
        self._memo = {}

    def evaluate(self, theta):
        """Return (mean inner fold score, stability proxy, outer-fold score)."""
        hit = self._memo.get(theta)
        if hit is not None:
            return hit
        L_rest = self.cache.losses(self.rest, theta, fold=self.t)
        base = L_rest[self.rest]
        scores = []
        mu = 0.0
        for t2, val_idx, train_idx in self.inner:
            L = self.cache.losses(train_idx, theta, fold=(self.t, t2))
            scores.append(float(np.mean(L[val_idx])))
            mu = max(mu, float(np.mean(np.abs(L[self.rest] - base))))
        s = 0.0
        for v in scores:
            s += v
        out = (s / len(scores), mu, float(np.mean(L_rest[self.outer])))
        self._memo[theta] = out
        return out

    def score(self, theta, lam):
        s, mu, _ = self.evaluate(theta)
        return s if lam == 0 else s + lam * mu


# --------------------------------------------------------------------------
# searches over the hyperparameter grid

@dataclass
class SearchResult:
    theta: object
    score: float
    trace: list
    visited: list

    def __iter__(self):
        yield self.theta
        yield self.trace


def _memoized(score):
    memo = {}
    order = []

    def f(theta):
        if theta not in memo:
            memo[theta] = _finite_or_inf(score(theta))
            order.append(theta)
        return memo[theta]

    return f, order


def coordinate_descent(grid, score, init=None, max_cycles=10) -> SearchResult:
    """Alternating axis sweeps over ``grid`` minimizing ``score``.

    Each sweep moves to the best point on the current axis line (ties go
    to the smaller hyperparameters). Stops when a full cycle leaves the
    point unchanged, when it revisits a cycle end point, or after
    ``max_cycles`` cycles.
    """
    f, visited = _memoized(score)
    current = grid.init if init is None else init
    trace = [{"cycle": 0, "axis": None, "theta": current, "score": f(current)}]
    ends = {current}
    for cycle in range(1, max_cycles + 1):
        start = current
        for axis in grid.names:
            current = min(grid.line(current, axis), key=lambda th: (f(th), th))
            trace.append({"cycle": cycle, "axis": axis, "theta": current, "score": f(current)})
        # with one axis a second sweep cannot move
        if current == start or current in ends or len(grid.names) == 1:
            break
        ends.add(current)
    return SearchResult(current, f(current), trace, visited)


def exhaustive_search(grid, score) -> SearchResult:
    f, visited = _memoized(score)
    best = min(grid.points(), key=lambda th: (f(th), th))
    trace = [{"cycle": 1, "axis": "*", "theta": best, "score": f(best)}]
    return SearchResult(best, f(best), trace, visited)


def _search(kind, grid, score, init, max_cycles):
    if kind == "coordinate":
        return coordinate_descent(grid, score, init, max_cycles)
    if kind == "exhaustive":
        return exhaustive_search(grid, score)
    raise ConfigError(f"unknown search {kind!r}; use 'coordinate' or 'exhaustive'")


def cv_evaluate(data, folds, learner, theta, loss=SQUARED_ERROR, with_stability=False,
                cache=None) -> CVEvaluation:
    """k-fold error, per-fold errors and (optionally) empirical stability at ``theta``."""
    if folds.n != data.n:
        raise ConfigError(f"folds cover {folds.n} samples but data has {data.n}")
    cache = cache or FitCache(learner, data, loss)
    return _FullContext(cache, folds).evaluate(theta, with_stability)


def coordinate_descent_select(data, folds, learner, grid=None, lam=0.0, loss=SQUARED_ERROR,
                              init=None, max_cycles=10, cache=None) -> SearchResult:
    """Pick theta by coordinate descent on ``cv_error + lam * stability``."""
    if not lam >= 0:
        raise ConfigError(f"stability weight must be >= 0, got {lam}")
    grid = grid or default_grid(learner, (data.n, data.p))
    cache = cache or FitCache(learner, data, loss)
    ctx = _FullContext(cache, folds)
    return coordinate_descent(grid, lambda th: ctx.score(th, lam), init, max_cycles)


# --------------------------------------------------------------------------
# reports

def _theta_dict(theta):
    return dataclasses.asdict(theta) if theta is not None else None


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class SelectionReport:
    learner: str
    k: int
    seed: int | None
    lambda_grid: list | None
    lambda_star: float | None
    theta_star: object
    estimate: float
    stability_at_star: float
    cv_error_at_star: float
    total_fits: int
    per_fold_outer_scores: list | None
    trace: list
    n: int = 0
    lambda_scores: list | None = None
    n_visited: int = 0
    empirical_M: float = 0.0
    balanced_folds: bool = True
    warnings: list = field(default_factory=list)

    @property
    def mode(self):
        return "kcv" if self.lambda_star is None else "nested"

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "mode": self.mode,
            "learner": self.learner,
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "lambda_grid": self.lambda_grid,
            "lambda_star": self.lambda_star,
            "theta_star": _theta_dict(self.theta_star),
            "estimate": _json_float(self.estimate),
            "cv_error_at_star": _json_float(self.cv_error_at_star),
            "stability_at_star": _json_float(self.stability_at_star),
            "total_fits": self.total_fits,
            "n_visited": self.n_visited,
            "per_fold_outer_scores": (None if self.per_fold_outer_scores is None
                                      else [_json_float(v) for v in self.per_fold_outer_scores]),
            "lambda_scores": (None if self.lambda_scores is None
                              else [_json_float(v) for v in self.lambda_scores]),
            "empirical_M": _json_float(self.empirical_M),
            "balanced_folds": self.balanced_folds,
            "warnings": list(self.warnings),
            "trace": [{"cycle": s["cycle"], "axis": s["axis"], "theta": _theta_dict(s["theta"]),
                       "score": _json_float(s["score"])} for s in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _nonfinite_warnings(visited_scores):
    return [f"non-finite score at {dataclasses.asdict(th)}"
            for th, s in visited_scores if not math.isfinite(s)]


def _resolve(data, k, seed, folds, learner, grid):
    if folds is None:
        folds = make_folds(data.n, k, seed)
    elif folds.n != data.n:
        raise ConfigError(f"folds cover {folds.n} samples but data has {data.n}")
    if grid is None:
        grid = default_grid(learner, (data.n, data.p))
    return folds, grid


def kcv_select(data, k=5, learner="sparse_ridge", grid=None, loss=SQUARED_ERROR, seed=0, *,
               folds=None, search="coordinate", cache=True, max_cycles=10) -> SelectionReport:
    """Plain k-fold selection (no stability penalty)."""
    folds, grid = _resolve(data, k, seed, folds, learner, grid)
    fc = FitCache(learner, data, loss, enabled=cache)
    ctx = _FullContext(fc, folds)
    res = _search(search, grid, lambda th: ctx.score(th, 0.0), None, max_cycles)
    ev = ctx.evaluate(res.theta, with_stability=True)
    warn = _nonfinite_warnings((th, ctx.evaluate(th).cv_error) for th in res.visited)
    return SelectionReport(
        learner=get_learner(learner).name, k=folds.k, seed=folds.seed, lambda_grid=None,
        lambda_star=None, theta_star=res.theta, estimate=ev.cv_error,
        stability_at_star=ev.stability, cv_error_at_star=ev.cv_error, total_fits=fc.fits,
        per_fold_outer_scores=None, trace=res.trace, n=data.n, n_visited=len(res.visited),
        empirical_M=fc.max_loss, balanced_folds=folds.is_balanced(), warnings=warn)


def nested_select(data, k=5, learner="sparse_ridge", grid=None, lambda_grid=None,
                  loss=SQUARED_ERROR, seed=0, *, folds=None, search="coordinate", cache=True,
                  max_cycles=10) -> SelectionReport:
    """Stability-regularized selection with the weight chosen by nested k-fold CV.

    For each weight and outer fold ``t`` the inner search runs on the data
    without fold ``t``, reusing the remaining folds as inner folds; the
    winner is scored on fold ``t``. The weight with the lowest mean outer
    score is then used for a final search on the full data.
    """
    if lambda_grid is None:
        lambda_grid = default_lambda_grid()
    lambda_grid = [float(v) for v in lambda_grid]
    if not lambda_grid:
        raise ConfigError("lambda grid is empty")
    if any(not (math.isfinite(v) and v >= 0) for v in lambda_grid):
        raise ConfigError("lambda grid entries must be finite and >= 0")
    folds, grid = _resolve(data, k, seed, folds, learner, grid)
    fc = FitCache(learner, data, loss, enabled=cache)
    visited = set()
    warn = []
    outer_scores = []
    for lam in lambda_grid:
        scores = []
        for t in range(folds.k):
            ctx = _InnerContext(fc, folds, t)
            res = _search(search, grid, lambda th, c=ctx, w=lam: c.score(th, w), None, max_cycles)
            visited.update(res.visited)
            scores.append(_finite_or_inf(ctx.evaluate(res.theta)[2]))
        outer_scores.append(scores)
    lambda_scores = []
    for scores in outer_scores:
        s = 0.0
        for v in scores:
            s += v
        lambda_scores.append(s / folds.k)
    best = min(range(len(lambda_grid)), key=lambda i: (lambda_scores[i], lambda_grid[i]))
    lam_star = lambda_grid[best]
    if not math.isfinite(lambda_scores[best]):
        warn.append("every stability weight produced a non-finite outer score")

    ctx = _FullContext(fc, folds)
    res = _search(search, grid, lambda th: ctx.score(th, lam_star), None, max_cycles)
    visited.update(res.visited)
    ev = ctx.evaluate(res.theta, with_stability=True)
    warn += _nonfinite_warnings((th, ctx.score(th, lam_star)) for th in res.visited)
    return SelectionReport(
        learner=get_learner(learner).name, k=folds.k, seed=folds.seed,
        lambda_grid=lambda_grid, lambda_star=lam_star, theta_star=res.theta,
        estimate=lambda_scores[best], stability_at_star=ev.stability,
        cv_error_at_star=ev.cv_error, total_fits=fc.fits,
        per_fold_outer_scores=outer_scores[best], trace=res.trace, n=data.n,
        lambda_scores=lambda_scores, n_visited=len(visited), empirical_M=fc.max_loss,
        balanced_folds=folds.is_balanced(), warnings=warn)


def fit_budget(n_lambda, k, n_visited):
    """Worst-case fit count of nested selection for the given visited-set size."""
    return n_lambda * k * k * n_visited + (k + 1) * n_visited


def retrain_final(data, learner, theta_star, n_train):
    """Fit on all of ``data``; a ``gamma`` field is rescaled by ``n_train / n``."""
    if hasattr(theta_star, "gamma"):
        theta_star = dataclasses.replace(theta_star, gamma=n_train * theta_star.gamma / data.n)
    return get_learner(learner).fit(data.X, data.y, theta_star)


# --------------------------------------------------------------------------
# test-error bound

@dataclass(frozen=True)
class BoundInputs:
    cv_error: float
    M: float
    mu_h: float
    k: int
    delta: float

    def __post_init__(self):
        vals = (self.cv_error, self.M, self.mu_h, self.k, self.delta)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ConfigError("bound inputs must be finite")
        if not self.M > 0:
            raise ConfigError(f"M must be > 0, got {self.M}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.mu_h < 0:
            raise ConfigError(f"stability must be >= 0, got {self.mu_h}")


def generalization_bound(b: BoundInputs) -> float:
    """High-probability upper bound on the test error from CV error and stability."""
    return b.cv_error + math.sqrt((b.M ** 2 + 6 * b.M * b.k * b.mu_h) / (2 * b.k * b.delta))


def bound_from_report(report: dict, delta: float, M: float | None = None) -> dict:
    """Evaluate the bound at a report's selected hyperparameters.

    Without ``M`` the largest loss observed during selection is used, which
    makes the result heuristic rather than a guarantee.
    """
    notes = []
    if M is None:
        M = report.get("empirical_M")
        if not M:
            raise ConfigError("report carries no empirical M; pass M explicitly")
        notes.append("M estimated as the largest observed loss; bound is heuristic")
    if not report.get("balanced_folds", True):
        notes.append("folds are unequal in size; the bound assumes k divides n")
    b = BoundInputs(report["cv_error_at_star"], M, report["stability_at_star"], report["k"], delta)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return {"cv_error": b.cv_error, "M": b.M, "mu_h": b.mu_h, "k": b.k, "delta": b.delta,
            "bound": generalization_bound(b), "warnings": notes}
