"""Repeated train/test experiments, their on-disk records, and paired summaries."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, csv_text, fmt
from .cv import (SCHEMA, bound_from_report, default_lambda_grid, kcv_select, nested_select,
                 retrain_final)
from .data import SQUARED_ERROR, MetricSummary, geometric_mean, load_csv, standardize
from .errors import ConfigError, UnpairedError
from .learners import HyperGrid, default_grid, gamma_axis
from .synth import SynthConfig, generate, heatmap_experiment, write_heatmap

MODES = ("kcv", "nested", "heatmap", "bound")


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _floats(v):
    if v is None or isinstance(v, (list, tuple)):
        return None if v is None else [float(x) for x in v]
    s = str(v).strip()
    if s.lower() in ("", "none", "default"):
        return None
    return [float(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _opt_float(v):
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return float(v)


def _opt_int(v):
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return int(v)


@dataclass
class ExperimentConfig:
    mode: str = "kcv"
    learner: str = "sparse_ridge"
    dataset: str = "synthetic"
    response: str = "-1"
    header: bool = True
    k: int = 5
    repeats: int = 10
    test_fraction: float = 0.1
    seed: int = 0
    lambda_grid: list | None = None
    lambda_zero: bool = False
    output_dir: str | None = None
    search: str = "coordinate"
    max_cycles: int = 10
    cache: bool = True
    jobs: int = 1
    # synthetic source
    n: int = 40
    p: int = 80
    tau_true: int = 5
    rho: float = 0.3
    nu: float = 1.0
    n_test: int = 10_000
    # grid overrides
    gamma_grid: list | None = None
    tau_max: int | None = None
    depth_grid: list | None = None
    min_samples_grid: list | None = None
    # bound / heatmap
    M: float | None = None
    delta: float = 0.05
    cv: str = "fivefold"
    svg: bool = False

    _CONVERT = {
        "header": _bool, "k": int, "repeats": int, "test_fraction": float, "seed": int,
        "lambda_grid": _floats, "lambda_zero": _bool, "max_cycles": int, "cache": _bool,
        "jobs": int, "n": int, "p": int, "tau_true": int, "rho": float, "nu": float,
        "n_test": int, "gamma_grid": _floats, "tau_max": _opt_int, "depth_grid": _floats,
        "min_samples_grid": _floats, "M": _opt_float, "delta": float, "svg": _bool,
    }

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    @classmethod
    def from_mapping(cls, mapping) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            conv = cls._CONVERT.get(key)
            try:
                kwargs[key] = conv(value) if conv and value is not None else value
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
        return cls(**kwargs)

    def replace(self, **overrides) -> ExperimentConfig:
        merged = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_mapping(merged)

    def echo(self) -> dict:
        """Config fields that influence results (the output location does not)."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d.pop("jobs")
        return d

    @property
    def synthetic(self) -> bool:
        return self.dataset in ("synthetic", "synth")


def parse_config_text(text) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(parse_config_text(text))


def build_grid(cfg: ExperimentConfig, n, p):
    grid = default_grid(cfg.learner, (n, p))
    axes = dict(grid.axes)
    init = grid.init
    if cfg.gamma_grid is not None and "gamma" in axes:
        axes["gamma"] = tuple(sorted(cfg.gamma_grid))
    if cfg.tau_max is not None and "tau" in axes:
        axes["tau"] = tuple(range(1, min(cfg.tau_max, p) + 1))
    if cfg.depth_grid is not None and "max_depth" in axes:
        axes["max_depth"] = tuple(sorted(int(v) for v in cfg.depth_grid))
    if cfg.min_samples_grid is not None and "min_samples_split" in axes:
        axes["min_samples_split"] = tuple(sorted(int(v) for v in cfg.min_samples_grid))
    fixes = {}
    for name, values in axes.items():
        cur = getattr(init, name)
        if cur not in values:
            fixes[name] = values[len(values) // 2] if name == "gamma" else values[0]
    if fixes:
        init = dataclasses.replace(init, **fixes)
    return HyperGrid(tuple((name, axes[name]) for name in grid.names), init)


def split_indices(n, test_fraction, seed):
    """Seeded shuffle; the first ceil(test_fraction * n) indices are held out."""
    perm = np.random.default_rng(seed).permutation(n)
    n_test = min(max(1, math.ceil(test_fraction * n)), n - 2)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _digest(idx):
    return hashlib.sha1(np.asarray(idx, dtype=np.int64).tobytes()).hexdigest()[:16]


@dataclass
class RunRecord:
    config: dict
    rows: list
    reports: list
    aggregate: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "config": self.config, "aggregate": self.aggregate,
                "repeats": self.reports}


ROW_FIELDS = ("repeat", "seed", "dataset", "split", "theta", "lambda_star", "estimate",
              "cv_error", "stability", "test_mse", "sparsity", "total_fits", "bound",
              "response_scale")


def _aggregate(rows) -> dict:
    est = [r["estimate"] for r in rows]
    test = [r["test_mse"] for r in rows]
    gaps = [(e - t) / t for e, t in zip(est, test)]
    return {
        "repeats": len(rows),
        "mean_estimate": float(np.mean(est)),
        "mean_test_mse": float(np.mean(test)),
        "mean_sparsity": float(np.mean([r["sparsity"] for r in rows])),
        "mean_total_fits": float(np.mean([r["total_fits"] for r in rows])),
        "mean_disappointment": float(np.mean(gaps)),
        "median_abs_disappointment": float(statistics.median(abs(g) for g in gaps)),
    }


def _run_repeat(cfg: ExperimentConfig, r: int, full=None) -> tuple:
    seed = cfg.seed + r
    start = time.monotonic()
    if cfg.synthetic:
        inst = generate(SynthConfig(cfg.n, cfg.p, cfg.tau_true, cfg.rho, cfg.nu, cfg.n_test, seed))
        train, test = inst.train, inst.test
        name, split = "synthetic", f"synthetic-{seed}"
    else:
        train_idx, test_idx = split_indices(full.n, cfg.test_fraction, seed)
        train, (test,) = standardize(full.subset(train_idx), [full.subset(test_idx)])
        name, split = full.name, _digest(test_idx)
    grid = build_grid(cfg, train.n, train.p)
    common = dict(k=cfg.k, learner=cfg.learner, grid=grid, loss=SQUARED_ERROR, seed=seed,
                  search=cfg.search, cache=cfg.cache, max_cycles=cfg.max_cycles)
    if cfg.mode == "nested":
        lam = cfg.lambda_grid if cfg.lambda_grid is not None else default_lambda_grid()
        if cfg.lambda_zero and 0.0 not in lam:
            lam = [0.0] + list(lam)
        report = nested_select(train, lambda_grid=lam, **common)
    else:
        report = kcv_select(train, **common)
    n_train = train.n - round(train.n / cfg.k)
    model = retrain_final(train, cfg.learner, report.theta_star, n_train)
    test_mse = float(np.mean(SQUARED_ERROR(test.y, model.predict(test.X))))
    rep = report.to_dict()
    bound = None
    if cfg.mode == "bound":
        bound = bound_from_report(rep, cfg.delta, cfg.M)["bound"]
    scale = train.standardization.y_scale ** 2 if train.standardization else 1.0
    row = {
        "repeat": r, "seed": seed, "dataset": name, "split": split,
        "theta": json.dumps(rep["theta_star"], sort_keys=True),
        "lambda_star": report.lambda_star, "estimate": float(report.estimate),
        "cv_error": float(report.cv_error_at_star), "stability": float(report.stability_at_star),
        "test_mse": test_mse, "sparsity": int(model.sparsity), "total_fits": report.total_fits,
        "bound": bound, "response_scale": float(scale),
    }
    rep.update({"repeat": r, "split": split, "test_mse": test_mse, "sparsity": row["sparsity"],
                "bound": bound})
    return row, rep, time.monotonic() - start


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Repeat split / select / retrain / test and collect a :class:`RunRecord`.

    Repeat ``r`` uses seed ``cfg.seed + r`` for its split (or synthetic
    draw) and its folds, so runs in different modes are paired.
    Writes ``runs.csv``, ``report.json`` and ``timings.csv`` when
    ``cfg.output_dir`` is set.
    """
    if cfg.mode == "heatmap":
        return run_heatmap(cfg)
    full = None
    if not cfg.synthetic:
        full = load_csv(cfg.dataset, cfg.response, cfg.header)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_run_repeat, [cfg] * cfg.repeats, range(cfg.repeats),
                                    [full] * cfg.repeats))
    else:
        results = [_run_repeat(cfg, r, full) for r in range(cfg.repeats)]
    rows = [res[0] for res in results]
    record = RunRecord(cfg.echo(), rows, [res[1] for res in results], _aggregate(rows),
                       [res[2] for res in results])
    if cfg.output_dir:
        write_record(record, cfg.output_dir)
    return record


def run_heatmap(cfg: ExperimentConfig) -> RunRecord:
    inst = generate(SynthConfig(cfg.n, cfg.p, cfg.tau_true, cfg.rho, cfg.nu, cfg.n_test, cfg.seed))
    gammas = cfg.gamma_grid if cfg.gamma_grid is not None else gamma_axis()
    taus = None if cfg.tau_max is None else range(1, min(cfg.tau_max, cfg.p) + 1)
    hm = heatmap_experiment(inst, gammas, taus, cfg.cv)
    summary = hm.summary()
    record = RunRecord(cfg.echo(), [], [], summary)
    if cfg.output_dir:
        write_heatmap(hm, cfg.output_dir, svg=cfg.svg)
        atomic_write_text(Path(cfg.output_dir) / "report.json",
                          json.dumps(record.to_dict(), indent=2) + "\n")
    return record


def write_record(record: RunRecord, out_dir) -> None:
    out = Path(out_dir)
    rows = [[fmt(row[f]) for f in ROW_FIELDS] for row in record.rows]
    atomic_write_text(out / "runs.csv", csv_text(ROW_FIELDS, rows))
    atomic_write_text(out / "report.json", json.dumps(record.to_dict(), indent=2) + "\n")
    atomic_write_text(out / "timings.csv",
                      csv_text(("repeat", "seconds"),
                               [[r, f"{t:.3f}"] for r, t in enumerate(record.timings)]))


def read_record(path) -> RunRecord:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read record {path}: {exc}") from exc
    if doc.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: not a {SCHEMA} document")
    rows = []
    for rep in doc.get("repeats", []):
        rows.append({"repeat": rep["repeat"], "split": rep["split"],
                     "theta": json.dumps(rep["theta_star"], sort_keys=True),
                     "estimate": rep["estimate"], "test_mse": rep["test_mse"],
                     "sparsity": rep["sparsity"], "total_fits": rep["total_fits"],
                     "dataset": doc["config"].get("dataset", "")})
    return RunRecord(doc["config"], rows, doc.get("repeats", []), doc.get("aggregate", {}))


def _check_paired(a: RunRecord, b: RunRecord):
    sa = [r["split"] for r in a.rows]
    sb = [r["split"] for r in b.rows]
    if sa != sb:
        raise UnpairedError("records do not share the same train/test splits")


def summarize(records, baselines) -> MetricSummary:
    """Compare candidate runs against paired baseline runs, one pair per dataset.

    Returns the per-dataset ratio of mean test MSEs, their geometric mean,
    the mean relative disappointment (estimate - test) / test of each side,
    and the fraction of repeats where both picked the same hyperparameters.
    """
    if isinstance(records, RunRecord):
        records = [records]
    if isinstance(baselines, RunRecord):
        baselines = [baselines]
    if len(records) != len(baselines) or not records:
        raise UnpairedError("need one baseline record per candidate record")
    ratios, agree, total = [], 0, 0
    gap_c, gap_b = [], []
    for cand, base in zip(records, baselines):
        _check_paired(cand, base)
        ratios.append(float(np.mean([r["test_mse"] for r in cand.rows]))
                      / float(np.mean([r["test_mse"] for r in base.rows])))
        for rc, rb in zip(cand.rows, base.rows):
            agree += rc["theta"] == rb["theta"]
            total += 1
            gap_c.append((rc["estimate"] - rc["test_mse"]) / rc["test_mse"])
            gap_b.append((rb["estimate"] - rb["test_mse"]) / rb["test_mse"])
    return MetricSummary(ratios, geometric_mean(ratios),
                         {"candidate": float(np.mean(gap_c)), "baseline": float(np.mean(gap_b))},
                         agree / total)


def repeat_ratio_summary(candidate: RunRecord, baseline: RunRecord) -> dict:
    """Per-repeat paired comparison (each repeat treated as its own dataset)."""
    _check_paired(candidate, baseline)
    ratios = [rc["test_mse"] / rb["test_mse"] for rc, rb in zip(candidate.rows, baseline.rows)]

    def med_abs(rows):
        return float(statistics.median(abs(r["estimate"] - r["test_mse"]) / r["test_mse"]
                                       for r in rows))
    return {
        "geometric_mean_ratio": geometric_mean(ratios),
        "median_abs_disappointment_candidate": med_abs(candidate.rows),
        "median_abs_disappointment_baseline": med_abs(baseline.rows),
        "agreement": float(np.mean([rc["theta"] == rb["theta"]
                                    for rc, rb in zip(candidate.rows, baseline.rows)])),
    }
