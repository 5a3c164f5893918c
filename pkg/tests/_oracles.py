"""Independent reference solvers used by the tests."""

import itertools

import numpy as np

EDGES3 = [(0, 1), (0, 2), (1, 2)]


def _edge_z(X, edges):
    return np.array([np.sum((X[i] - X[j]) ** 2) for i, j in edges])


def _quadratic3(theta):
    S = np.zeros((3, 3))
    for e, (i, j) in enumerate(EDGES3):
        S[i, e] = S[j, e] = 1.0
    # theta (sum deg^2 + 2 sum w^2) = theta w^T (S^T S + 2 I) w
    return theta * (S.T @ S + 2.0 * np.eye(3))


def graph_objective3(X, theta, w):
    """Objective for three features evaluated on rows of ``w``."""
    z = _edge_z(X, EDGES3)
    H = _quadratic3(theta)
    w = np.atleast_2d(w)
    return w @ z + np.einsum("ij,jk,ik->i", w, H, w)


def grid_best3(X, theta, resolution=1e-3):
    """Best point of a regular grid over {w >= 0, sum w = 3/2}."""
    m = int(round(1 / resolution))
    a, b = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = a + b <= m
    frac = np.stack([a[keep], b[keep], m - a[keep] - b[keep]], axis=1) / m
    values = graph_objective3(X, theta, 1.5 * frac)
    i = int(np.argmin(values))
    return float(values[i]), 1.5 * frac[i]


def exact_best3(X, theta):
    """Exact minimiser by solving the KKT system on every face of the simplex."""
    z = _edge_z(X, EDGES3)
    H = _quadratic3(theta)
    best = (np.inf, None)
    for size in (1, 2, 3):
        for support in itertools.combinations(range(3), size):
            s = list(support)
            K = np.zeros((size + 1, size + 1))
            K[:size, :size] = 2 * H[np.ix_(s, s)]
            K[:size, size] = 1
            K[size, :size] = 1
            rhs = np.concatenate([-z[s], [1.5]])
            try:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            w = np.zeros(3)
            w[s] = sol[:size]
            if np.any(w < -1e-12) or abs(w.sum() - 1.5) > 1e-9:
                continue
            w = np.maximum(w, 0)
            value = float(graph_objective3(X, theta, w)[0])
            if value < best[0]:
                best = (value, w)
    return best


def simplex_projection_bisection(v, total, iters=200):
    """Projection by bisection on the threshold."""
    lo, hi = v.min() - total, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > total:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0)


def subgradient_descent(F, subgrad, x0, iters, step0):
    """Diminishing-step subgradient method; returns the best objective seen."""
    x = x0.copy()
    best = F(x)
    for it in range(1, iters + 1):
        g = subgrad(x)
        x = x - (step0 / np.sqrt(it)) * g
        best = min(best, F(x))
    return best


def fd_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g
