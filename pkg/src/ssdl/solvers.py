"""Block updates for the alternating scheme.

* codes ``A``: accelerated proximal gradient (FISTA) on the l1-composite problem
* dictionary ``D``: projected gradient onto unit-norm columns
* classifier ``W``: closed-form ridge solution

The smooth objectives carry no 1/2 factor, so every gradient has a leading
2 and the l1 prox with step ``t`` shrinks by ``lam * t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .core import (Dataset, DivergenceError, Hyperparameters,
                   InvalidArgumentError, SingularSystemError, UNIT_NORM_TOL,
                   right_apply)

POWER_ITERS = 30
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class StepReport:
    iterations_used: int
    initial_objective: float
    final_objective: float
    converged: bool

    @property
    def monotone(self) -> bool:
        return self.final_objective <= (
            self.initial_objective + 1e-8 * (1.0 + abs(self.initial_objective)))


def soft_threshold(x: np.ndarray, amount: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - amount, 0.0)


def top_eigenvalue(L, dim: int, iters: int = POWER_ITERS) -> float:
    """Power-iteration estimate of the largest eigenvalue of a symmetric PSD ``L``."""
    v = np.random.default_rng(0).standard_normal(dim)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iters):
        u = np.asarray(L @ v)
        estimate = float(np.linalg.norm(u))
        if estimate == 0.0:
            return 0.0
        v = u / estimate
    return estimate


def spectral_norm_sq(M: np.ndarray) -> float:
    """Largest singular value of ``M``, squared (from the smaller Gram)."""
    if M.size == 0:
        return 0.0
    gram = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
    return float(max(scipy.linalg.eigvalsh(gram)[-1], 0.0))


def _relative_change(old: float, new: float) -> float:
    return abs(old - new) / max(abs(old), _TINY)


def _slack(value: float) -> float:
    return 1e-12 * max(1.0, abs(value))


def fista(x0: np.ndarray,
          smooth_grad: Callable[[np.ndarray], tuple],
          smooth: Callable[[np.ndarray], float],
          penalty: Callable[[np.ndarray], float],
          prox: Callable[[np.ndarray, float], np.ndarray],
          lipschitz: float, max_iter: int, tol: float, name: str = "fista"):
    """Accelerated proximal gradient with backtracking and monotone restarts.

    A candidate that raises the composite objective is discarded and the
    momentum reset, so the returned point never scores worse than ``x0``.
    """
    L = max(lipschitz, _TINY)
    x = x0
    F0 = F = smooth(x) + penalty(x)
    if not np.isfinite(F):
        raise DivergenceError(f"{name}: non-finite objective at start")
    y, t = x, 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        fy, g = smooth_grad(y)
        while True:
            z = prox(y - g / L, 1.0 / L)
            d = z - y
            fz = smooth(z)
            if not np.isfinite(fz):
                raise DivergenceError(
                    f"{name}: non-finite objective with step size {1.0 / L:.3e}")
            if fz <= fy + np.vdot(g, d) + 0.5 * L * np.vdot(d, d) + _slack(fy):
                break
            L *= 2.0
        Fz = fz + penalty(z)
        if Fz > F:
            if t == 1.0:
                converged = True  # a plain prox step from x no longer descends
                break
            y, t = x, 1.0
            continue
        change = _relative_change(F, Fz)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_new) * (z - x)
        x, F, t = z, Fz, t_new
        if change < tol:
            converged = True
            break
    return x, StepReport(it, float(F0), float(F), converged)


def _check_step_inputs(ds: Dataset, D: np.ndarray, A: np.ndarray):
    n, N = ds.X.shape
    if D.ndim != 2 or D.shape[0] != n:
        raise InvalidArgumentError(f"D has shape {D.shape}, expected ({n}, p)")
    if A.shape != (D.shape[1], N):
        raise InvalidArgumentError(
            f"A has shape {A.shape}, expected {(D.shape[1], N)}")


def coding_objective(ds: Dataset, D: np.ndarray, W: np.ndarray, L_A,
                     hp: Hyperparameters):
    """Smooth part of the code subproblem as ``A -> (value, gradient)``.

    ``||X - DA||^2 + beta tr(A L_A A^T) + gamma ||Y - W A_train||^2``; the
    label term only reaches the first ``N_train`` columns of the gradient.
    """
    X, Y = ds.X, ds.Y_train
    N_train = ds.N_train
    beta, gamma = hp.beta, hp.gamma
    use_graph = beta != 0.0
    use_labels = gamma != 0.0 and N_train > 0
    G = D.T @ D
    B = D.T @ X
    xx = float(np.sum(X * X))

    def parts(A):
        GA = G @ A
        f = xx - 2.0 * np.vdot(B, A) + np.vdot(A, GA)
        grad = 2.0 * (GA - B)
        if use_graph:
            AL = right_apply(A, L_A)
            f += beta * np.vdot(A, AL)
            grad += 2.0 * beta * AL
        if use_labels:
            R = W @ A[:, :N_train] - Y
            f += gamma * np.vdot(R, R)
            grad[:, :N_train] += 2.0 * gamma * (W.T @ R)
        return float(f), grad

    return parts


def sparse_coding_step(ds: Dataset, D: np.ndarray, A_init: np.ndarray,
                       W: np.ndarray, L_A, hp: Hyperparameters):
    """Minimise over ``A`` with ``D`` and ``W`` fixed.

    ``||X - DA||^2 + beta tr(A L_A A^T) + gamma ||Y - W A_train||^2
    + lam ||A||_1``. ``L_A`` may be dense, sparse or a linear operator; it is
    ignored when ``beta == 0``.
    """
    _check_step_inputs(ds, D, A_init)
    if W.shape != (ds.n_classes, D.shape[1]):
        raise InvalidArgumentError(
            f"W has shape {W.shape}, expected {(ds.n_classes, D.shape[1])}")
    if hp.beta != 0.0 and (L_A is None or L_A.shape != (ds.N, ds.N)):
        raise InvalidArgumentError(f"L_A must be {ds.N}x{ds.N}")
    lam = hp.lam
    parts = coding_objective(ds, D, W, L_A, hp)

    lipschitz = spectral_norm_sq(D)
    if hp.beta != 0.0:
        lipschitz += hp.beta * top_eigenvalue(L_A, ds.N)
    if hp.gamma != 0.0 and ds.N_train > 0:
        lipschitz += hp.gamma * spectral_norm_sq(W)
    return fista(np.array(A_init, dtype=np.float64), parts,
                 lambda A: parts(A)[0],
                 lambda A: lam * float(np.sum(np.abs(A))),
                 lambda V, step: soft_threshold(V, lam * step),
                 2.0 * lipschitz, hp.sc_iters, hp.tol, "sparse coding")


def _project_columns(D: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(D, axis=0)
    dead = norms < UNIT_NORM_TOL
    if np.any(dead):
        D = D.copy()
        fresh = rng.standard_normal((D.shape[0], int(dead.sum())))
        D[:, dead] = fresh
        norms[dead] = np.linalg.norm(fresh, axis=0)
    return D / norms


def dictionary_objective(ds: Dataset, A: np.ndarray, L_D: np.ndarray,
                         alpha: float):
    """``||X - DA||^2 + alpha tr(D^T L_D D)`` as a value and a gradient function."""
    X = ds.X
    AAt = A @ A.T
    XAt = X @ A.T
    xx = float(np.sum(X * X))

    def value(D):
        f = xx - 2.0 * np.vdot(D, XAt) + np.vdot(D.T @ D, AAt)
        if alpha:
            f += alpha * np.vdot(D, L_D @ D)
        return float(f)

    def gradient(D):
        g = 2.0 * (D @ AAt - XAt)
        if alpha:
            g += 2.0 * alpha * (L_D @ D)
        return g

    return value, gradient


def dictionary_update_step(ds: Dataset, D_init: np.ndarray, A: np.ndarray,
                           L_D: np.ndarray, hp: Hyperparameters,
                           rng: Optional[np.random.Generator] = None):
    """Projected gradient on ``||X - DA||^2 + alpha tr(D^T L_D D)`` over unit columns.

    The gradient step against the exact Lipschitz bound is followed by the
    projection, so each accepted iterate minimises a quadratic majoriser over
    the constraint set and the objective cannot rise.
    """
    _check_step_inputs(ds, D_init, A)
    n = ds.n_features
    if L_D.shape != (n, n):
        raise InvalidArgumentError(f"L_D must be {n}x{n}, got {L_D.shape}")
    if rng is None:
        rng = np.random.default_rng(hp.seed)
    alpha = hp.alpha
    value, gradient = dictionary_objective(ds, A, L_D, alpha)

    L = 2.0 * spectral_norm_sq(A)
    if alpha:
        L += 2.0 * alpha * top_eigenvalue(L_D, n)
    L = max(L, _TINY)

    D = np.array(D_init, dtype=np.float64)
    F0 = F = value(D)
    converged = False
    it = 0
    for it in range(1, hp.du_iters + 1):
        g = gradient(D)
        while True:
            D_new = _project_columns(D - g / L, rng)
            delta = D_new - D
            F_new = value(D_new)
            if not np.isfinite(F_new):
                raise DivergenceError(
                    f"dictionary update: non-finite objective with step size "
                    f"{1.0 / L:.3e}")
            if F_new <= F + np.vdot(g, delta) + 0.5 * L * np.vdot(delta, delta) \
                    + _slack(F):
                break
            L *= 2.0
        if F_new > F:
            converged = True
            break
        change = _relative_change(F, F_new)
        D, F = D_new, F_new
        if change < hp.tol:
            converged = True
            break
    return D, StepReport(it, F0, F, converged)


def classifier_update_step(A_train: np.ndarray, Y_train: np.ndarray,
                           gamma: float, mu: float) -> np.ndarray:
    """``W = gamma Y A^T (gamma A A^T + mu I)^{-1}`` via a Cholesky solve."""
    if gamma < 0 or mu < 0 or (gamma == 0 and mu == 0):
        raise InvalidArgumentError(
            f"need gamma, mu >= 0 with one positive (got {gamma}, {mu})")
    p = A_train.shape[0]
    if Y_train.shape[1] != A_train.shape[1]:
        raise InvalidArgumentError(
            f"Y_train has {Y_train.shape[1]} columns, A_train {A_train.shape[1]}")
    M = gamma * (A_train @ A_train.T) + mu * np.eye(p)
    eig = scipy.linalg.eigvalsh(M)
    if eig[0] <= eig[-1] * p * np.finfo(float).eps:
        raise SingularSystemError(
            f"classifier system is singular (eigenvalues {eig[0]:.3e}..{eig[-1]:.3e})")
    rhs = gamma * (A_train @ Y_train.T)
    try:
        factor = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, rhs).T


def column_coding_objective(X: np.ndarray, D: np.ndarray, anchors: np.ndarray,
                            beta: float):
    """Per-column smooth part ``||x_j - D a_j||^2 + beta ||a_j - anchor_j||^2``.

    Returns ``A -> (values, gradient)`` with one value per column.
    """
    p = D.shape[1]
    if anchors.shape != (p, X.shape[1]):
        raise InvalidArgumentError(
            f"anchors must be {(p, X.shape[1])}, got {anchors.shape}")
    G = D.T @ D + beta * np.eye(p)
    B = D.T @ X + beta * anchors
    const = (np.einsum("ij,ij->j", X, X)
             + beta * np.einsum("ij,ij->j", anchors, anchors))

    def parts(A, cols=slice(None)):
        GA = G @ A
        values = (const[cols] - 2.0 * np.einsum("ij,ij->j", B[:, cols], A)
                  + np.einsum("ij,ij->j", A, GA))
        return values, 2.0 * (GA - B[:, cols])

    return parts


def code_columns(X: np.ndarray, D: np.ndarray, anchors: np.ndarray,
                 beta: float, lam: float, max_iter: int, tol: float,
                 A0: Optional[np.ndarray] = None) -> np.ndarray:
    """Independent per-column coding against a fixed dictionary.

    Column ``j`` minimises ``||x_j - D a||^2 + beta ||a - anchor_j||^2
    + lam ||a||_1``. Each column keeps its own momentum, restarts and stopping
    test, so its result does not depend on the other columns in the batch.
    """
    parts = column_coding_objective(X, D, anchors, beta)
    p, m = anchors.shape
    step = 1.0 / max(2.0 * (spectral_norm_sq(D) + beta), _TINY)

    x = np.zeros((p, m)) if A0 is None else np.array(A0, dtype=np.float64)
    F = parts(x)[0] + lam * np.abs(x).sum(axis=0)
    y = x.copy()
    t = np.ones(m)
    active = np.ones(m, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        _, grad = parts(y[:, idx], idx)
        z = soft_threshold(y[:, idx] - step * grad, lam * step)
        Fz = parts(z, idx)[0] + lam * np.abs(z).sum(axis=0)
        if not np.all(np.isfinite(Fz)):
            raise DivergenceError(
                f"test coding: non-finite objective with step size {step:.3e}")
        worse = Fz > F[idx]
        stalled = worse & (t[idx] == 1.0)
        restart = worse & ~stalled
        accept = ~worse
        # candidates that went uphill under momentum restart from the current point
        r = idx[restart]
        y[:, r] = x[:, r]
        t[r] = 1.0
        active[idx[stalled]] = False
        a = idx[accept]
        za = z[:, accept]
        Fa = Fz[accept]
        change = np.abs(F[a] - Fa) / np.maximum(np.abs(F[a]), _TINY)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t[a] ** 2))
        y[:, a] = za + ((t[a] - 1.0) / t_new) * (za - x[:, a])
        x[:, a] = za
        F[a] = Fa
        t[a] = t_new
        active[a[change < tol]] = False
    return x
