"""Learning a smoothness graph over features.

Solves

    min_L  tr(X^T L X) + theta ||L||_F^2
    s.t.   L = L^T,  L 1 = 0,  tr(L) = n,  L[i, j] <= 0 (i != j)

in edge-weight form. Writing ``L = diag(deg) - Wmat`` with ``w_e = Wmat[i, j]``
for each pair ``i < j`` makes symmetry and zero row sums structural; the rest
becomes ``w >= 0, sum(w) = n / 2`` and the objective is

    sum_e w_e z_e + theta (sum_i deg_i^2 + 2 sum_e w_e^2),
    z_e = ||X[i, :] - X[j, :]||^2.

The quadratic's Hessian ``theta (2 S^T S + 4 I)`` (``S`` the unsigned incidence
matrix) has largest eigenvalue exactly ``4 theta n``, which fixes the step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DivergenceError, InvalidArgumentError


@dataclass(frozen=True)
class FeatureGraph:
    L_D: np.ndarray
    w: np.ndarray
    iterations: int = 0
    objective: float = float("nan")


def project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w >= 0, sum(w) = total}``.

    Sort-based; only entries above a cheap lower bound on the threshold take
    part in the sort.
    """
    if total <= 0:
        raise InvalidArgumentError(f"simplex total must be > 0, got {total}")
    # The threshold is at least the all-active value and at least max(v) - total.
    floor = max((v.sum() - total) / v.size, v.max() - total)
    cand = v[v > floor]
    u = np.sort(cand)[::-1]
    css = np.cumsum(u) - total
    rho = np.nonzero(u * np.arange(1, u.size + 1) > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def edge_distances(X: np.ndarray):
    """Pair list ``(i, j)`` with ``i < j`` and squared row distances ``z``."""
    n = X.shape[0]
    rows, cols = np.triu_indices(n, 1)
    sq = np.einsum("ij,ij->i", X, X)
    gram = X @ X.T
    z = sq[rows] + sq[cols] - 2.0 * gram[rows, cols]
    np.maximum(z, 0.0, out=z)
    return rows, cols, z


def degrees(w: np.ndarray, rows: np.ndarray, cols: np.ndarray, n: int):
    return np.bincount(rows, w, n) + np.bincount(cols, w, n)


def graph_objective(w, z, rows, cols, n, theta) -> float:
    deg = degrees(w, rows, cols, n)
    return float(w @ z + theta * (deg @ deg + 2.0 * (w @ w)))


def laplacian_from_weights(w: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                           n: int) -> np.ndarray:
    L = np.zeros((n, n))
    L[rows, cols] = -w
    L[cols, rows] = -w
    L[np.diag_indices(n)] = degrees(w, rows, cols, n)
    return L


def _min_face_weights(z: np.ndarray, total: float) -> np.ndarray:
    # theta = 0 leaves a linear program; spread mass evenly over the cheapest edges
    best = z <= z.min() + 1e-12 * max(1.0, abs(z.min()))
    w = np.zeros_like(z)
    w[best] = total / best.sum()
    return w


def learn_feature_graph(X: np.ndarray, theta: float, iters: int = 2000,
                        tol: float = 1e-9) -> FeatureGraph:
    """Feature-graph Laplacian ``L_D`` learned from the rows of ``X``.

    Accelerated projected gradient over the edge weights, with momentum
    restarts whenever the objective goes up. Every accepted iterate is a
    projection and so lies on the feasible simplex.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 features, got {n}")
    if theta < 0:
        raise InvalidArgumentError(f"theta must be >= 0, got {theta}")
    rows, cols, z = edge_distances(X)
    total = n / 2.0

    if theta == 0:
        w = _min_face_weights(z, total)
        return FeatureGraph(laplacian_from_weights(w, rows, cols, n), w, 0,
                            graph_objective(w, z, rows, cols, n, theta))

    step = 1.0 / (4.0 * theta * n)
    w = np.full(z.size, total / z.size)
    f = graph_objective(w, z, rows, cols, n, theta)
    y, t = w, 1.0
    it = 0
    for it in range(1, iters + 1):
        deg = degrees(y, rows, cols, n)
        grad = z + theta * (2.0 * (deg[rows] + deg[cols]) + 4.0 * y)
        w_new = project_simplex(y - step * grad, total)
        f_new = graph_objective(w_new, z, rows, cols, n, theta)
        if not np.isfinite(f_new):
            raise DivergenceError(f"graph learning diverged (step {step:.3e})")
        if f_new > f:
            if t == 1.0:
                break  # plain step failed to descend: at optimum up to rounding
            y, t = w, 1.0
            continue
        change = abs(f - f_new) / max(abs(f), np.finfo(float).tiny)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, f, t = w_new, f_new, t_new
        if change < tol:
            break
    return FeatureGraph(laplacian_from_weights(w, rows, cols, n), w, it, f)
