"""Time the numba and numpy tree kernels against each other.

    python benchmarks/bench_kernels.py [--repeat 5]

Reports best-of-N wall time per call for the split search, for tree
routing, and for a full CART fit, plus the speedup of numba over numpy.
The first numba call (compilation) is excluded.
"""

import argparse
import time

import numpy as np

from stabcv import _kernels
from stabcv.learners import fit_cart_arrays


def best_time(fn, repeat):
    fn()  # warm-up, also triggers numba compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cart_fit(flag, X, y):
    saved = _kernels.USE_NUMBA
    _kernels.USE_NUMBA = flag
    try:
        return fit_cart_arrays(X, y, 10, 2)
    finally:
        _kernels.USE_NUMBA = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'case':<34}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for n, p in ((40, 80), (200, 10), (1000, 20)):
        X = rng.normal(size=(n, p))
        y = X[:, 0] - np.sin(X[:, 1]) + 0.3 * rng.normal(size=n)
        tree = cart_fit(True, X, y)
        args_t = (tree.feature, tree.threshold, tree.left, tree.right, tree.value, X)
        cases = {
            f"best_split n={n} p={p}": (lambda: _kernels.best_split_numpy(X, y),
                                       lambda: _kernels.best_split_numba(X, y)),
            f"predict_tree n={n} leaves={tree.n_leaves}": (
                lambda: _kernels.predict_tree_numpy(*args_t),
                lambda: _kernels.predict_tree_numba(*args_t)),
            f"cart fit depth<=10 n={n} p={p}": (lambda: cart_fit(False, X, y),
                                               lambda: cart_fit(True, X, y)),
        }
        for label, (slow, fast) in cases.items():
            a = best_time(slow, args.repeat)
            b = best_time(fast, args.repeat)
            print(f"{label:<34}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{a / b:>9.1f}x")


if __name__ == "__main__":
    main()
