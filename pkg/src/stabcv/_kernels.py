"""Hot inner loops of the regression tree: split search and routing.

Each kernel has a numba-compiled version and a pure-numpy version that
returns bit-identical results. The numba path is used when numba imports
and ``STABCV_DISABLE_NUMBA`` is unset (or ``0``/``false``).
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None


def _env_disabled() -> bool:
    return os.environ.get("STABCV_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def _midpoint(a, b):
    t = 0.5 * (a + b)
    # adjacent floats can round the midpoint up to b
    return t if t < b else a


def best_split_numpy(X, y):
    """Return ``(feature, threshold, score)`` of the best variance split.

    ``score`` is S_l^2/n_l + S_r^2/n_r, which the split maximizes; the
    children's squared error is ``sum(y**2) - score``. ``feature`` is -1
    when no feature takes two distinct values. Ties go to the lowest
    feature, then the lowest threshold.
    """
    m, p = X.shape
    if m < 2:
        return -1, 0.0, -np.inf
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    cs = np.cumsum(y[order], axis=0)
    total = cs[-1]
    left = cs[:-1]
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    right = total - left
    q = left * left / n_left + right * right / (m - n_left)
    q = np.where(xs[1:] > xs[:-1], q, -np.inf)
    flat = q.T.ravel()
    best = int(np.argmax(flat))
    if flat[best] == -np.inf:
        return -1, 0.0, -np.inf
    f, i = divmod(best, m - 1)
    return f, _midpoint(xs[i, f], xs[i + 1, f]), float(flat[best])


def predict_tree_numpy(feature, threshold, left, right, value, X):
    m = X.shape[0]
    node = np.zeros(m, dtype=np.int64)
    rows = np.arange(m)
    while True:
        f = feature[node]
        internal = f >= 0
        if not internal.any():
            break
        go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
        node = np.where(internal, np.where(go_left, left[node], right[node]), node)
    return value[node]


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def best_split_numba(X, y):
        m, p = X.shape
        best_f = -1
        best_i = 0
        best_q = -np.inf
        if m < 2:
            return -1, 0.0, -np.inf
        xs = np.empty(m)
        ys = np.empty(m)
        for f in range(p):
            order = np.argsort(X[:, f], kind="mergesort")
            for i in range(m):
                xs[i] = X[order[i], f]
                ys[i] = y[order[i]]
            total = 0.0
            for i in range(m):
                total += ys[i]
            s = 0.0
            for i in range(m - 1):
                s += ys[i]
                if xs[i + 1] > xs[i]:
                    nl = float(i + 1)
                    r = total - s
                    q = s * s / nl + r * r / (m - nl)
                    if q > best_q:
                        best_q = q
                        best_f = f
                        best_i = i
        if best_f < 0:
            return -1, 0.0, -np.inf
        order = np.argsort(X[:, best_f], kind="mergesort")
        a = X[order[best_i], best_f]
        b = X[order[best_i + 1], best_f]
        t = 0.5 * (a + b)
        if not t < b:
            t = a
        return best_f, t, best_q

    @numba.njit(cache=True)
    def predict_tree_numba(feature, threshold, left, right, value, X):
        m = X.shape[0]
        out = np.empty(m)
        for r in range(m):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
        return out

else:  # pragma: no cover
    best_split_numba = None
    predict_tree_numba = None


def best_split(X, y):
    if USE_NUMBA:
        f, t, q = best_split_numba(X, y)
        return int(f), float(t), float(q)
    return best_split_numpy(X, y)


def predict_tree(feature, threshold, left, right, value, X):
    if USE_NUMBA:
        return predict_tree_numba(feature, threshold, left, right, value, X)
    return predict_tree_numpy(feature, threshold, left, right, value, X)
