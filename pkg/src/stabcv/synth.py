"""Synthetic sparse regression instances and the (tau, gamma) heatmap study."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, csv_text, fmt
from .cv import FitCache, _FullContext
from .data import SQUARED_ERROR, Dataset, make_folds, standardize
from .errors import ConfigError, FitError, NumericalError
from .learners import SparseRidgeParams, fit_sparse_ridge_arrays, gamma_axis


@dataclass(frozen=True)
class SynthConfig:
    n: int
    p: int
    tau_true: int = 5
    rho: float = 0.3
    nu: float = 1.0
    n_test: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1 or self.n_test < 1:
            raise ConfigError(f"need n >= 2, p >= 1, n_test >= 1 (got {self.n}, {self.p}, {self.n_test})")
        if not 1 <= self.tau_true <= self.p:
            raise ConfigError(f"tau_true must lie in [1, p], got {self.tau_true}")
        if not 0 <= self.rho < 1:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.nu > 0:
            raise ConfigError(f"nu must be > 0, got {self.nu}")


@dataclass(frozen=True, eq=False)
class SynthInstance:
    train: Dataset
    test: Dataset
    beta_true: np.ndarray
    support: np.ndarray
    signal: np.ndarray
    noise: np.ndarray
    config: SynthConfig


def toeplitz_cov(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def generate(cfg: SynthConfig) -> SynthInstance:
    """Gaussian design with AR(1) correlation and an exactly rescaled noise vector.

    ``signal`` and ``noise`` are the raw (pre-standardization) training
    parts of the response; their norm ratio equals sqrt(nu). The test set
    is drawn from the same process (its noise rescaled the same way) and
    standardized with the training coefficients.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    try:
        chol = np.linalg.cholesky(toeplitz_cov(cfg.p, cfg.rho))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance factorization failed: {exc}") from exc
    support = np.sort(rng.choice(cfg.p, size=cfg.tau_true, replace=False))
    beta = np.zeros(cfg.p)
    beta[support] = rng.choice(np.array([-1.0, 1.0]), size=cfg.tau_true)

    def draw(m):
        X = rng.standard_normal((m, cfg.p)) @ chol.T
        signal = X @ beta
        eps = rng.standard_normal(m)
        eps *= np.linalg.norm(signal) / (math.sqrt(cfg.nu) * np.linalg.norm(eps))
        return X, signal, eps

    X, signal, noise = draw(cfg.n)
    Xt, signal_t, noise_t = draw(cfg.n_test)
    train, (test,) = standardize(Dataset(X, signal + noise, name="synthetic"),
                                 [Dataset(Xt, signal_t + noise_t, name="synthetic-test")])
    return SynthInstance(train, test, beta, support, signal, noise, cfg)


@dataclass(frozen=True, eq=False)
class Heatmap:
    taus: tuple
    gammas: tuple
    cv: np.ndarray
    test: np.ndarray
    kind: str

    def cv_argmin(self):
        """(row, col) of the smallest CV error; ties go to smaller tau, then gamma."""
        flat = np.where(np.isnan(self.cv), np.inf, self.cv).ravel()
        return divmod(int(np.argmin(flat)), len(self.gammas))

    def summary(self) -> dict:
        i, j = self.cv_argmin()
        test_min = float(np.nanmin(self.test))
        return {
            "kind": self.kind,
            "tau_at_cv_min": self.taus[i],
            "gamma_at_cv_min": self.gammas[j],
            "cv_at_cv_min": float(self.cv[i, j]),
            "test_at_cv_min": float(self.test[i, j]),
            "test_min": test_min,
            "excess_over_test_min": float(self.test[i, j] / test_min - 1.0),
            "test_over_cv": float(self.test[i, j] / self.cv[i, j]),
        }


def heatmap_experiment(cfg_or_instance, gamma_grid=None, tau_grid=None, cv_kind="fivefold",
                       fold_seed=None) -> Heatmap:
    """CV error and test MSE of sparse ridge for every (tau, gamma) cell.

    Cells whose fit fails are left as NaN.
    """
    inst = cfg_or_instance if isinstance(cfg_or_instance, SynthInstance) else generate(cfg_or_instance)
    train, test = inst.train, inst.test
    gammas = tuple(gamma_grid) if gamma_grid is not None else gamma_axis()
    taus = tuple(tau_grid) if tau_grid is not None else tuple(range(1, min(train.p, train.n) + 1))
    if not gammas or not taus:
        raise ConfigError("heatmap grids must be non-empty")
    if cv_kind == "loocv":
        k = train.n
    elif cv_kind == "fivefold":
        k = 5
    else:
        raise ConfigError(f"cv kind must be 'loocv' or 'fivefold', got {cv_kind!r}")
    seed = inst.config.seed if fold_seed is None else fold_seed
    folds = make_folds(train.n, k, seed)
    ctx = _FullContext(FitCache("sparse_ridge", train, SQUARED_ERROR, enabled=False), folds)
    cv = np.full((len(taus), len(gammas)), np.nan)
    te = np.full_like(cv, np.nan)
    for a, tau in enumerate(taus):
        for b, gamma in enumerate(gammas):
            theta = SparseRidgeParams(tau, gamma)
            try:
                cv[a, b] = ctx.evaluate(theta).cv_error
                model = fit_sparse_ridge_arrays(train.X, train.y, tau, gamma)
                te[a, b] = float(np.mean(SQUARED_ERROR(test.y, model.predict(test.X))))
            except (FitError, np.linalg.LinAlgError):
                continue
    return Heatmap(taus, gammas, cv, te, cv_kind)


def heatmap_csv(taus, gammas, matrix) -> str:
    rows = [[fmt(t)] + [fmt(float(v)) for v in row] for t, row in zip(taus, matrix)]
    return csv_text(["tau"] + [fmt(float(g)) for g in gammas], rows)


_RAMP = ((33, 102, 172), (247, 247, 247), (178, 24, 43))


def _color(u):
    if u != u:
        return "#bdbdbd"
    u = min(max(u, 0.0), 1.0)
    lo, hi, w = (_RAMP[0], _RAMP[1], u / 0.5) if u <= 0.5 else (_RAMP[1], _RAMP[2], (u - 0.5) / 0.5)
    return "#%02x%02x%02x" % tuple(round(a + (b - a) * w) for a, b in zip(lo, hi))


def heatmap_svg(taus, gammas, matrix, title="", cell=28) -> str:
    """Standalone SVG heatmap; colors follow log10 of the values."""
    m = np.asarray(matrix, dtype=float)
    logv = np.log10(np.where(m > 0, m, np.nan))
    lo, hi = np.nanmin(logv), np.nanmax(logv)
    span = hi - lo if hi > lo else 1.0
    left, top = 60, 40
    width = left + cell * len(gammas) + 20
    height = top + cell * len(taus) + 70
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="9">',
           f'<text x="{left}" y="20" font-size="12">{title}</text>']
    for a, tau in enumerate(taus):
        y = top + a * cell
        out.append(f'<text x="{left - 6}" y="{y + cell * 0.6:.1f}" text-anchor="end">{tau}</text>')
        for b in range(len(gammas)):
            u = (logv[a, b] - lo) / span
            out.append(f'<rect x="{left + b * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{_color(u)}"><title>tau={tau} gamma={gammas[b]:.4g} '
                       f'value={m[a, b]:.6g}</title></rect>')
    ybase = top + cell * len(taus) + 12
    for b, g in enumerate(gammas):
        x = left + b * cell + cell / 2
        out.append(f'<text x="{x:.1f}" y="{ybase}" transform="rotate(60 {x:.1f} {ybase})">{g:.3g}</text>')
    out.append(f'<text x="{left + cell * len(gammas) / 2:.1f}" y="{height - 4}" '
               f'text-anchor="middle">gamma</text>')
    out.append(f'<text x="12" y="{top + cell * len(taus) / 2:.1f}">tau</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def write_heatmap(hm: Heatmap, out_dir, svg=False) -> list:
    out_dir = Path(out_dir)
    written = []
    for label, matrix in (("cv", hm.cv), ("test", hm.test)):
        path = out_dir / f"heatmap_{label}_{hm.kind}.csv"
        atomic_write_text(path, heatmap_csv(hm.taus, hm.gammas, matrix))
        written.append(path)
        if svg:
            path = out_dir / f"heatmap_{label}_{hm.kind}.svg"
            atomic_write_text(path, heatmap_svg(hm.taus, hm.gammas, matrix,
                                                f"{label} error ({hm.kind})"))
            written.append(path)
    return written
