"""Hot inner loops over the N = n(n-1) ordered pairs.

Every kernel exists twice: a numba version compiled with ``@njit`` and a
pure-numpy version. The module-level names point at whichever backend
``srgm._accel`` selected; both variants stay importable under ``*_numba`` /
``*_numpy`` so the benchmark and the tests can compare them.

Pair order is lexicographic in (i, j) with the diagonal skipped, which is the
row-major order of an n x n matrix with its diagonal removed.
"""
import numpy as np

from ._accel import HAS_NUMBA

__all__ = [
    "predictor",
    "row_col_sums",
    "scatter",
    "loss_value",
    "loss_and_grad",
    "weighted_cross",
    "component_roots",
    "BACKEND_KERNELS",
]


def _offdiag_view(flat, n):
    """View of the off-diagonal cells of a flattened n x n array.

    Dropping the first cell and reshaping to (n-1, n+1) puts every diagonal
    cell in the last column, so the first n columns list the off-diagonal
    cells in row-major pair order.
    """
    return flat[1:].reshape(n - 1, n + 1)[:, :n]


def _softplus_np(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid_np(x):
    e = np.exp(-np.abs(x))
    inv = 1.0 / (1.0 + e)
    return np.where(x >= 0, inv, e * inv)


def _loss_from_eta(eta, a_ind):
    e = np.exp(-np.abs(eta))
    loss = float(np.sum(np.maximum(eta, 0.0) + np.log1p(e)) - np.dot(a_ind, eta))
    inv = 1.0 / (1.0 + e)
    p = np.where(eta >= 0, inv, e * inv)
    return loss, p - a_ind


# ---------------------------------------------------------------- numpy path


def predictor_numpy(alpha, beta, mu, zg):
    n = alpha.shape[0]
    full = np.add.outer(alpha + mu, beta).ravel()
    return _offdiag_view(full, n).ravel() + zg


def row_col_sums_numpy(vals, n):
    """Row and column sums of the pair vector laid out as an n x n matrix."""
    mat = scatter_numpy(vals, n)
    return mat.sum(axis=1), mat.sum(axis=0)


def scatter_numpy(vals, n):
    """n x n matrix with ``vals`` off the diagonal and zeros on it."""
    flat = np.zeros(n * n)
    _offdiag_view(flat, n)[...] = vals.reshape(n - 1, n)
    return flat.reshape(n, n)


def loss_value_numpy(alpha, beta, mu, zg, a_ind):
    eta = predictor_numpy(alpha, beta, mu, zg)
    return float(np.sum(_softplus_np(eta)) - np.dot(a_ind, eta))


def loss_and_grad_numpy(alpha, beta, mu, zg, a_ind):
    """Return (loss, grad_alpha, grad_beta, grad_mu, residual)."""
    n = alpha.shape[0]
    loss, resid = _loss_from_eta(predictor_numpy(alpha, beta, mu, zg), a_ind)
    g_alpha, g_beta = row_col_sums_numpy(resid, n)
    return loss, g_alpha, g_beta, float(g_alpha.sum()), resid


def weighted_cross_numpy(alpha, beta, mu, zg):
    """Weights w = p(1-p) per pair and the same weights as an n x n matrix."""
    n = alpha.shape[0]
    p = _sigmoid_np(predictor_numpy(alpha, beta, mu, zg))
    w = p * (1.0 - p)
    return w, scatter_numpy(w, n)


def component_roots_numpy(n, u, v):
    # Fallback delegates to scipy's graph traversal.
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    adj = coo_matrix((np.ones(u.shape[0]), (u, v)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return labels.astype(np.int64)


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def predictor_numba(alpha, beta, mu, zg):
        n = alpha.shape[0]
        out = np.empty(n * (n - 1))
        k = 0
        for i in range(n):
            ai = alpha[i] + mu
            for j in range(n):
                if j == i:
                    continue
                out[k] = ai + beta[j] + zg[k]
                k += 1
        return out

    @njit(cache=True)
    def row_col_sums_numba(vals, n):
        rows = np.zeros(n)
        cols = np.zeros(n)
        k = 0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                if j == i:
                    continue
                r = vals[k]
                acc += r
                cols[j] += r
                k += 1
            rows[i] = acc
        return rows, cols

    @njit(cache=True)
    def scatter_numba(vals, n):
        mat = np.zeros((n, n))
        k = 0
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                mat[i, j] = vals[k]
                k += 1
        return mat

    # Transcendentals stay in numpy: its vectorised exp/log1p beat numba's
    # scalar libm calls by a wide margin, so the compiled pieces only handle
    # the index bookkeeping around them.

    def loss_value_numba(alpha, beta, mu, zg, a_ind):
        eta = predictor_numba(alpha, beta, mu, zg)
        return float(np.sum(_softplus_np(eta)) - np.dot(a_ind, eta))

    def loss_and_grad_numba(alpha, beta, mu, zg, a_ind):
        n = alpha.shape[0]
        loss, resid = _loss_from_eta(predictor_numba(alpha, beta, mu, zg), a_ind)
        g_alpha, g_beta = row_col_sums_numba(resid, n)
        return loss, g_alpha, g_beta, float(g_alpha.sum()), resid

    def weighted_cross_numba(alpha, beta, mu, zg):
        n = alpha.shape[0]
        p = _sigmoid_np(predictor_numba(alpha, beta, mu, zg))
        w = p * (1.0 - p)
        return w, scatter_numba(w, n)

    @njit(cache=True)
    def _find(parent, x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            nxt = parent[x]
            parent[x] = root
            x = nxt
        return root

    @njit(cache=True)
    def component_roots_numba(n, u, v):
        parent = np.arange(n)
        size = np.ones(n, dtype=np.int64)
        for e in range(u.shape[0]):
            ru = _find(parent, u[e])
            rv = _find(parent, v[e])
            if ru == rv:
                continue
            if size[ru] < size[rv]:
                ru, rv = rv, ru
            parent[rv] = ru
            size[ru] += size[rv]
        roots = np.empty(n, dtype=np.int64)
        for i in range(n):
            roots[i] = _find(parent, i)
        return roots

    predictor = predictor_numba
    row_col_sums = row_col_sums_numba
    scatter = scatter_numba
    loss_value = loss_value_numba
    loss_and_grad = loss_and_grad_numba
    weighted_cross = weighted_cross_numba
    component_roots = component_roots_numba
else:
    predictor = predictor_numpy
    row_col_sums = row_col_sums_numpy
    scatter = scatter_numpy
    loss_value = loss_value_numpy
    loss_and_grad = loss_and_grad_numpy
    weighted_cross = weighted_cross_numpy
    component_roots = component_roots_numpy


BACKEND_KERNELS = {
    "numpy": {
        "predictor": predictor_numpy,
        "row_col_sums": row_col_sums_numpy,
        "scatter": scatter_numpy,
        "loss_value": loss_value_numpy,
        "loss_and_grad": loss_and_grad_numpy,
        "weighted_cross": weighted_cross_numpy,
        "component_roots": component_roots_numpy,
    }
}
if HAS_NUMBA:
    BACKEND_KERNELS["numba"] = {
        "predictor": predictor_numba,
        "row_col_sums": row_col_sums_numba,
        "scatter": scatter_numba,
        "loss_value": loss_value_numba,
        "loss_and_grad": loss_and_grad_numba,
        "weighted_cross": weighted_cross_numba,
        "component_roots": component_roots_numba,
    }
