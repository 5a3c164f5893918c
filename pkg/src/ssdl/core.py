"""Domain types, hyperparameters and the objective evaluator.

Matrix conventions follow the usual dictionary-learning layout: samples are
columns. ``X`` is ``n x N`` (features by samples), the dictionary ``D`` is
``n x p``, codes ``A`` are ``p x N`` and the classifier ``W`` is ``c x p``.
The first ``N_train`` columns of ``X`` and ``A`` are the labelled block.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

UNIT_NORM_TOL = 1e-12


class InvalidArgumentError(ValueError):
    """Raised on inconsistent shapes or out-of-range parameters."""


class DivergenceError(ArithmeticError):
    """Raised when an iterative solver produces a non-finite objective."""


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a linear system that must be SPD is numerically singular."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Features with a labelled prefix and an unlabelled suffix.

    ``y_test`` holds the true labels of the unlabelled block when they are
    known (for evaluation only; training never reads it). ``sample_ids``
    maps columns back to rows of the source file.
    """

    X: np.ndarray
    Y_train: np.ndarray
    y_test: Optional[np.ndarray] = None
    sample_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        X = _frozen(self.X)
        Y = _frozen(self.Y_train)
        if X.ndim != 2 or Y.ndim != 2:
            raise InvalidArgumentError("X and Y_train must be 2-D")
        n, N = X.shape
        c, n_train = Y.shape
        if n < 1 or N < 1:
            raise InvalidArgumentError(f"empty feature matrix {X.shape}")
        if c < 2:
            raise InvalidArgumentError(f"need at least 2 classes, got {c}")
        if n_train > N:
            raise InvalidArgumentError(
                f"Y_train has {n_train} columns but X only {N}")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("X has non-finite entries")
        if not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=0) == 1):
            raise InvalidArgumentError("Y_train must be one-hot per column")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y_train", Y)
        if self.y_test is not None:
            y_test = np.asarray(self.y_test, dtype=np.int64).copy()
            if y_test.shape != (N - n_train,):
                raise InvalidArgumentError(
                    f"y_test must have {N - n_train} entries")
            y_test.setflags(write=False)
            object.__setattr__(self, "y_test", y_test)
        if self.sample_ids is not None:
            ids = np.asarray(self.sample_ids, dtype=np.int64).copy()
            if ids.shape != (N,):
                raise InvalidArgumentError(f"sample_ids must have {N} entries")
            ids.setflags(write=False)
            object.__setattr__(self, "sample_ids", ids)

    @classmethod
    def from_labels(cls, X, y_train, n_classes=None, y_test=None,
                    sample_ids=None) -> "Dataset":
        """Build a dataset from integer labels of the labelled prefix."""
        y_train = np.asarray(y_train, dtype=np.int64)
        if n_classes is None:
            known = y_train if y_test is None else np.concatenate(
                [y_train, np.asarray(y_test, dtype=np.int64)])
            n_classes = int(known.max()) + 1
        return cls(X, one_hot(y_train, n_classes), y_test, sample_ids)

    @property
    def n_features(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def N_train(self) -> int:
        return self.Y_train.shape[1]

    @property
    def N_test(self) -> int:
        return self.N - self.N_train

    @property
    def n_classes(self) -> int:
        return self.Y_train.shape[0]

    @property
    def X_train(self) -> np.ndarray:
        return self.X[:, :self.N_train]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[:, self.N_train:]

    @property
    def y_train(self) -> np.ndarray:
        return np.argmax(self.Y_train, axis=0)

    def labelled(self) -> "Dataset":
        """The labelled block alone, as a dataset with no unlabelled part."""
        ids = None if self.sample_ids is None else self.sample_ids[:self.N_train]
        return Dataset(self.X_train, self.Y_train, None, ids)


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidArgumentError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")
    Y = np.zeros((n_classes, labels.size))
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


@dataclass(frozen=True)
class Hyperparameters:
    """Model weights and solver budgets.

    Defaults for the model weights are the MNIST settings. ``lam`` is the
    l1 weight (``lambda`` is a Python keyword). ``graph_iters`` and
    ``graph_tol`` budget the one-off feature-graph solve; ``k_cls`` is the
    neighbour count of the code-space k-NN classifier.
    """

    lam: float = 0.5
    gamma: float = 0.2
    mu: float = 0.1
    alpha: float = 10.0
    beta: float = 0.5
    theta: float = 2.0
    k: int = 66
    p: int = 64
    outer_iters: int = 30
    sc_iters: int = 200
    du_iters: int = 100
    tol: float = 1e-5
    seed: int = 0
    graph_iters: int = 2000
    graph_tol: float = 1e-9
    k_cls: int = 5

    def __post_init__(self):
        for name in ("lam", "gamma", "mu", "alpha", "beta", "theta", "tol",
                     "graph_tol"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be >= 0, got {value}")
        for name in ("k", "p", "outer_iters", "sc_iters", "du_iters",
                     "graph_iters", "k_cls"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(
                    f"{name} must be >= 1, got {getattr(self, name)}")

    def replace(self, **changes) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def normalize_columns(D: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms < UNIT_NORM_TOL):
        raise InvalidArgumentError("cannot normalise a zero column")
    return D / norms


def check_dictionary(D: np.ndarray, tol: float = UNIT_NORM_TOL) -> None:
    """Raise unless every column of ``D`` has unit Euclidean norm."""
    norms = np.linalg.norm(D, axis=0)
    worst = np.max(np.abs(norms - 1.0)) if norms.size else 0.0
    if worst > tol:
        raise InvalidArgumentError(
            f"dictionary columns are not unit norm (max deviation {worst:.3e})")


def right_apply(A: np.ndarray, L) -> np.ndarray:
    """``A @ L`` for a symmetric ``L`` given densely, sparsely or as an operator."""
    return np.asarray(L @ A.T).T


def objective_value(ds: Dataset, D: np.ndarray, A: np.ndarray, W: np.ndarray,
                    L_A, L_D: np.ndarray, hp: Hyperparameters) -> float:
    """Full training objective, evaluated term by term.

    ``||X - DA||_F^2 + lam ||A||_1 + alpha tr(D^T L_D D)
    + beta tr(A L_A A^T) + gamma ||Y_train - W A_train||_F^2 + mu ||W||_F^2``
    """
    X = ds.X
    n, N = X.shape
    if D.ndim != 2 or D.shape[0] != n:
        raise InvalidArgumentError(f"D has shape {D.shape}, expected ({n}, p)")
    p = D.shape[1]
    if A.shape != (p, N):
        raise InvalidArgumentError(f"A has shape {A.shape}, expected {(p, N)}")
    if W.shape != (ds.n_classes, p):
        raise InvalidArgumentError(
            f"W has shape {W.shape}, expected {(ds.n_classes, p)}")
    if L_A.shape != (N, N):
        raise InvalidArgumentError(f"L_A has shape {L_A.shape}, expected {(N, N)}")
    if L_D.shape != (n, n):
        raise InvalidArgumentError(f"L_D has shape {L_D.shape}, expected {(n, n)}")

    residual = X - D @ A
    value = float(np.sum(residual * residual))
    value += hp.lam * float(np.sum(np.abs(A)))
    value += hp.alpha * float(np.sum(D * (L_D @ D)))
    value += hp.beta * float(np.sum(A * right_apply(A, L_A)))
    label_residual = ds.Y_train - W @ A[:, :ds.N_train]
    value += hp.gamma * float(np.sum(label_residual * label_residual))
    value += hp.mu * float(np.sum(W * W))
    return value
