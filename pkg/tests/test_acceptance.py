"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

import itertools
import json
import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from stabcv import learners
from stabcv.cv import (BoundInputs, FitCache, coordinate_descent_select, cv_evaluate,
                       fit_budget, generalization_bound, nested_select, regularized_score)
from stabcv.data import SQUARED_ERROR, Dataset, FoldPartition, make_folds
from stabcv.experiment import ExperimentConfig, repeat_ratio_summary, run_experiment
from stabcv.learners import ConstantParams, HyperGrid, MeanParams, SparseRidgeParams, default_grid
from stabcv.synth import SynthConfig, generate, heatmap_experiment

LINES = []
_FIRST_RUNS = {}


def _report(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    LINES.append(line)
    print(line)
    return passed


def _sum_in_order(values):
    total = 0.0
    for v in values:
        total += v
    return total


# --- 1 ---------------------------------------------------------------------

def criterion_1():
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    bad = []
    kinds = ("ridge", "sparse_ridge", "cart")
    for case in range(200):
        learner = kinds[case % 3]
        n = int(rng.integers(4, 41))
        p = int(rng.integers(1, 11))
        k = int(rng.integers(2, min(n, 10) + 1))
        X = rng.normal(size=(n, p))
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        ds = Dataset(X, y)
        folds = make_folds(n, k, int(rng.integers(0, 2**31)))
        points = list(default_grid(learner, (n, p)).points())
        theta = points[int(rng.integers(len(points)))]
        ev = cv_evaluate(ds, folds, learner, theta, with_stability=True)
        # independent recomputation of every partial error
        for j, idx in enumerate(folds.folds):
            train = np.setdiff1d(np.arange(n), idx)
            model = learners.get_learner(learner).fit(X[train], y[train], theta)
            h_j = float(np.sum((y[idx] - model.predict(X[idx])) ** 2))
            if not math.isclose(h_j, ev.partial_errors[j], rel_tol=1e-9, abs_tol=1e-12):
                bad.append((case, "partial", j))
        if ev.cv_error != _sum_in_order(ev.partial_errors) / n:
            bad.append((case, "identity"))
        if not ev.stability >= 0:
            bad.append((case, "stability sign"))
        if regularized_score(ev, 0.0) != ev.cv_error:
            bad.append((case, "lambda 0"))
        const = cv_evaluate(ds, folds, "constant", ConstantParams(float(rng.normal())),
                            with_stability=True)
        if const.stability != 0.0:
            bad.append((case, "constant stability"))
    elapsed = time.monotonic() - start
    ok = not bad and elapsed < 30
    return _report(1, "identity suite", ok,
                   f"200 instances, {len(bad)} violations, {elapsed:.1f}s (limit 30s)")


# --- 2 ---------------------------------------------------------------------

def criterion_2():
    ds = Dataset(np.zeros((4, 1)), np.array([0.0, 0.0, 2.0, 2.0]))
    ev = cv_evaluate(ds, FoldPartition.from_folds([[0, 1], [2, 3]]), "mean", MeanParams(1.0),
                     with_stability=True)
    b = generalization_bound(BoundInputs(0.0, 1.0, 0.0, 5, 0.5))
    ks = [generalization_bound(BoundInputs(4.0, 1.0, 2.0, k, 0.5)) for k in range(2, 21)]
    decreasing = all(a > c for a, c in zip(ks, ks[1:]))
    ok = ev.cv_error == 4.0 and ev.stability == 2.0 and abs(b - 0.447214) <= 1e-6 \
        and abs(b - math.sqrt(0.2)) <= 1e-9 and decreasing
    return _report(2, "hand examples", ok,
                   f"cv={ev.cv_error!r} mu={ev.stability!r} bound={b:.9f} "
                   f"strictly decreasing in k={decreasing}")


# --- 3 ---------------------------------------------------------------------

def criterion_3():
    start = time.monotonic()
    agree = total = 0
    ledger = []
    for learner in ("ridge", "sparse_ridge", "cart"):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            n, p = 20, 4
            X = rng.normal(size=(n, p))
            ds = Dataset(X, X[:, 0] - 0.5 * X[:, 1] + rng.normal(size=n))
            folds = make_folds(n, 5, seed)
            rep = nested_select(ds, learner=learner, lambda_grid=[0.0], folds=folds)
            plain = coordinate_descent_select(ds, folds, learner)
            agree += rep.theta_star == plain.theta
            total += 1
            ledger.append((rep.total_fits, fit_budget(1, folds.k, rep.n_visited)))
    _FIRST_RUNS["ledger_c3"] = ledger
    ok = agree == total
    return _report(3, "lambda = 0 equivalence", ok,
                   f"{agree}/{total} agree (100% required), {time.monotonic() - start:.1f}s")


# --- 4 ---------------------------------------------------------------------

def _exact_sparse_optimum(X, y, tau, gamma):
    best = math.inf
    for support in itertools.combinations(range(X.shape[1]), tau):
        Xs = X[:, support]
        A = np.vstack([Xs, np.eye(tau) / math.sqrt(gamma)])
        beta = np.linalg.lstsq(A, np.concatenate([y, np.zeros(tau)]), rcond=None)[0]
        best = min(best, learners.sparse_ridge_objective(Xs, y, beta, gamma))
    return best


def criterion_4_data():
    rows = []
    for seed in range(100):
        inst = generate(SynthConfig(30, 8, tau_true=3, seed=seed, n_test=1))
        gamma = float(10 ** np.random.default_rng(seed).uniform(-3, 3))
        X, y = inst.train.X, inst.train.y
        model = learners.fit_sparse_ridge_arrays(X, y, 3, gamma)
        heur = learners.sparse_ridge_objective(X, y, model.coef, gamma)
        rows.append({"seed": seed, "gamma": gamma, "heuristic": heur,
                     "exact": _exact_sparse_optimum(X, y, 3, gamma),
                     "support": model.support.tolist(), "sparsity": model.sparsity})
    return rows


def criterion_4():
    start = time.monotonic()
    rows = criterion_4_data()
    _FIRST_RUNS[4] = rows
    within = sum(r["heuristic"] <= 1.05 * r["exact"] for r in rows)
    violations = sum(r["sparsity"] > 3 for r in rows)
    elapsed = time.monotonic() - start
    worst = max(r["heuristic"] / r["exact"] - 1 for r in rows)
    ok = within >= 90 and violations == 0 and elapsed < 120
    return _report(4, "sparse-ridge oracle", ok,
                   f"{within}/100 within 5% (need 90), worst gap {worst:.2%}, "
                   f"support violations {violations}, {elapsed:.1f}s (limit 120s)")


# --- 5 ---------------------------------------------------------------------

def criterion_5_data():
    over, under = [], []
    for seed in range(20):
        over.append(heatmap_experiment(SynthConfig(50, 10, 5, 0.3, 1.0, seed=seed),
                                       cv_kind="fivefold").summary())
        under.append(heatmap_experiment(SynthConfig(10, 50, 5, 0.3, 1.0, seed=seed),
                                        cv_kind="loocv").summary())
    return {"overdetermined": over, "underdetermined": under}


def criterion_5():
    start = time.monotonic()
    data = criterion_5_data()
    _FIRST_RUNS[5] = data
    excess = statistics.median(s["excess_over_test_min"] for s in data["overdetermined"])
    ratio = statistics.median(s["test_over_cv"] for s in data["underdetermined"])
    elapsed = time.monotonic() - start
    ok = excess <= 0.15 and ratio >= 10 and elapsed < 600
    return _report(5, "heatmap adaptivity gap", ok,
                   f"overdetermined median excess {excess:.1%} (limit 15%), underdetermined "
                   f"median test/CV {ratio:.3g} (need >= 10), {elapsed:.1f}s (limit 600s)")


# --- 6 ---------------------------------------------------------------------

def _paired_config(mode, out):
    return ExperimentConfig(mode=mode, learner="sparse_ridge", n=40, p=80, tau_true=5, rho=0.3,
                            nu=1.0, repeats=20, k=5, seed=0, output_dir=str(out))


def criterion_6_run(out_dir):
    out_dir = Path(out_dir)
    kcv = run_experiment(_paired_config("kcv", out_dir / "kcv"))
    nested = run_experiment(_paired_config("nested", out_dir / "nested"))
    return kcv, nested


def criterion_6(out_dir):
    start = time.monotonic()
    kcv, nested = criterion_6_run(out_dir)
    _FIRST_RUNS[6] = Path(out_dir)
    _FIRST_RUNS["ledger_c6"] = [(r["total_fits"], fit_budget(len(r["lambda_grid"]), r["k"],
                                                             r["n_visited"]))
                                for r in nested.reports]
    s = repeat_ratio_summary(nested, kcv)
    elapsed = time.monotonic() - start
    ratio_ok = s["geometric_mean_ratio"] <= 1.02
    gap_ok = s["median_abs_disappointment_candidate"] < s["median_abs_disappointment_baseline"]
    ok = ratio_ok and gap_ok and elapsed < 900
    return _report(6, "nested benefit (paired synthetic)", ok,
                   f"geo-mean MSE ratio nested/kCV {s['geometric_mean_ratio']:.4f} (limit 1.02), "
                   f"median |disappointment| nested {s['median_abs_disappointment_candidate']:.3f}"
                   f" vs kCV {s['median_abs_disappointment_baseline']:.3f}, "
                   f"agreement {s['agreement']:.2f}, {elapsed:.1f}s (limit 900s)")


# --- 7 ---------------------------------------------------------------------

def criterion_7():
    over = []
    rng = np.random.default_rng(7)
    for learner in ("ridge", "sparse_ridge", "cart"):
        for seed in range(3):
            n, p = 20, 5
            X = rng.normal(size=(n, p))
            ds = Dataset(X, X[:, 0] + rng.normal(size=n))
            for cache in (True, False):
                rep = nested_select(ds, 4, learner, seed=seed, cache=cache)
                over.append((rep.total_fits, fit_budget(len(rep.lambda_grid), 4, rep.n_visited)))
    over += _FIRST_RUNS.get("ledger_c3", []) + _FIRST_RUNS.get("ledger_c6", [])
    ledger_ok = all(f <= b for f, b in over)

    X = rng.normal(size=(25, 4))
    ds = Dataset(X, X[:, 1] + rng.normal(size=25))
    grid = HyperGrid.build(SparseRidgeParams(1, 0.1), tau=(1, 2, 3, 4), gamma=(0.1, 1.0, 10.0))
    k = 5
    cached = nested_select(ds, k, "sparse_ridge", grid, seed=1, search="exhaustive")
    uncached = nested_select(ds, k, "sparse_ridge", grid, seed=1, search="exhaustive", cache=False)
    saving_cap = (k + 1) * k * grid.size + (k + 1) * grid.size
    saving_ok = cached.total_fits <= saving_cap
    ok = ledger_ok and saving_ok
    return _report(7, "fit-count ledger", ok,
                   f"{sum(f <= b for f, b in over)}/{len(over)} runs within budget; exhaustive "
                   f"|Lambda|={len(cached.lambda_grid)} |Theta|={grid.size}: cached "
                   f"{cached.total_fits} <= {saving_cap}, uncached {uncached.total_fits}")


# --- 8 ---------------------------------------------------------------------

def _dump(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def criterion_8(out_dir):
    start = time.monotonic()
    out_dir = Path(out_dir)
    first, second = out_dir / "first", out_dir / "second"
    rows4 = _FIRST_RUNS.get(4) or criterion_4_data()
    data5 = _FIRST_RUNS.get(5) or criterion_5_data()
    _dump(rows4, first / "c4" / "report.json")
    _dump(data5, first / "c5" / "report.json")
    _dump(criterion_4_data(), second / "c4" / "report.json")
    _dump(criterion_5_data(), second / "c5" / "report.json")
    run6 = _FIRST_RUNS.get(6)
    if run6 is None:
        criterion_6_run(first / "c6")
        run6 = first / "c6"
    criterion_6_run(second / "c6")
    compared, differ = 0, []
    pairs = [(first / c / "report.json", second / c / "report.json") for c in ("c4", "c5")]
    for mode in ("kcv", "nested"):
        for name in ("runs.csv", "report.json"):
            pairs.append((run6 / mode / name, second / "c6" / mode / name))
    for a, b in pairs:
        compared += 1
        if a.read_bytes() != b.read_bytes():
            differ.append(b.relative_to(out_dir).as_posix())
    ok = not differ
    return _report(8, "determinism", ok,
                   f"{compared - len(differ)}/{compared} output files byte-identical across two "
                   f"runs of criteria 4-6 ({time.monotonic() - start:.1f}s)"
                   + (f"; differing: {differ}" if differ else ""))


# --- 9 ---------------------------------------------------------------------

def criterion_9():
    worst = 0.0
    for seed in range(20):
        cfg = SynthConfig(40, 80, seed=seed, nu=float(0.25 * (1 + seed % 5)), n_test=10)
        inst = generate(cfg)
        ratio = np.linalg.norm(inst.signal) / np.linalg.norm(inst.noise)
        worst = max(worst, abs(ratio / math.sqrt(cfg.nu) - 1))
    inst = generate(SynthConfig(5000, 3, tau_true=1, rho=0.3, n_test=1, seed=9))
    X = inst.train.standardization.inverse_features(inst.train.X)
    corr13 = float(np.corrcoef(X[:, 0], X[:, 2])[0, 1])
    counts = np.zeros(5, dtype=int)
    for s in range(10_000):
        counts[generate(SynthConfig(2, 5, tau_true=1, n_test=1, seed=s)).support[0]] += 1
    ok = worst <= 1e-12 and abs(corr13 - 0.09) <= 0.05 and np.all(np.abs(counts - 2000) <= 150)
    return _report(9, "synthetic generator statistics", ok,
                   f"max SNR rel. error {worst:.1e} (limit 1e-12), corr(x1, x3) {corr13:.4f} "
                   f"(0.09 +/- 0.05), support counts {counts.tolist()} (2000 +/- 150)")


# --- pytest wiring ---------------------------------------------------------

def test_criterion_1_identity_suite():
    assert criterion_1()


def test_criterion_2_hand_examples():
    assert criterion_2()


def test_criterion_3_lambda_zero_equivalence():
    assert criterion_3()


def test_criterion_4_sparse_ridge_oracle():
    assert criterion_4()


def test_criterion_5_heatmap_gap():
    assert criterion_5()


@pytest.fixture(scope="module")
def c6_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("criterion6")


def test_criterion_6_nested_benefit(c6_dir):
    assert criterion_6(c6_dir)


def test_criterion_7_fit_ledger():
    assert criterion_7()


def test_criterion_8_determinism(tmp_path):
    assert criterion_8(tmp_path)


def test_criterion_9_generator_statistics():
    assert criterion_9()


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(),
                   criterion_6(Path(tmp) / "c6"), criterion_7(), criterion_8(Path(tmp) / "c8"),
                   criterion_9()]
    print(f"{sum(results)}/{len(results)} criteria passed")
