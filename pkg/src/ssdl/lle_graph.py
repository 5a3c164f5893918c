"""k-NN search, locally linear reconstruction weights and the sample graph.

Each sample is rewritten as an affine combination of its ``k`` nearest
neighbours. Stacking the weights row-wise gives a row-stochastic ``V`` and
the regulariser matrix ``L_A = (I - V)^T (I - V)``, so that
``tr(A L_A A^T) = sum_i ||a_i - sum_j V[i, j] a_j||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator
from scipy.spatial.distance import cdist

from .core import InvalidArgumentError

GRAM_REG = 1e-3
_BLOCK = 512


@dataclass(frozen=True)
class NeighborIndex:
    """Row ``i`` lists the ``k`` nearest reference columns of query ``i``."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __getitem__(self, i):
        return self.indices[i]


def knn_query(queries: np.ndarray, reference: np.ndarray, k: int,
              exclude_self: bool = False) -> NeighborIndex:
    """Exact Euclidean k-NN of each query column among reference columns.

    Ties are broken by the lower reference index. With ``exclude_self`` the
    queries must be the reference set itself and column ``i`` is never its
    own neighbour.
    """
    n_ref = reference.shape[1]
    available = n_ref - 1 if exclude_self else n_ref
    if k < 1 or k > available:
        raise InvalidArgumentError(
            f"k={k} neighbours requested but only {available} candidates")
    m = queries.shape[1]
    indices = np.empty((m, k), dtype=np.int64)
    sq = np.empty((m, k))
    ref_rows = np.ascontiguousarray(reference.T)
    for start in range(0, m, _BLOCK):
        stop = min(start + _BLOCK, m)
        d2 = cdist(np.ascontiguousarray(queries[:, start:stop].T), ref_rows,
                   "sqeuclidean")
        if exclude_self:
            d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        # stable sort keeps the lower index first among equal distances
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        indices[start:stop] = order
        sq[start:stop] = np.take_along_axis(d2, order, axis=1)
    return NeighborIndex(indices, np.sqrt(sq))


def find_knn(X: np.ndarray, k: int) -> NeighborIndex:
    """k nearest other samples of every column of ``X``."""
    N = X.shape[1]
    if k >= N:
        raise InvalidArgumentError(f"k={k} must be smaller than N={N}")
    return knn_query(X, X, k, exclude_self=True)


def lle_weights(x: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Sum-to-one weights that best reconstruct ``x`` from ``neighbors``.

    Solves ``(G + eps I) w = 1`` on the local Gram matrix of the centred
    neighbours, with ``eps = 1e-3 tr(G)`` (``1e-3`` if the trace vanishes),
    then rescales ``w`` to sum to one.
    """
    Z = neighbors - x[:, None]
    G = Z.T @ Z
    trace = np.trace(G)
    G[np.diag_indices_from(G)] += GRAM_REG * trace if trace > 0 else GRAM_REG
    w = np.linalg.solve(G, np.ones(G.shape[0]))
    return w / w.sum()


@dataclass(frozen=True)
class SampleGraph:
    """LLE weights ``V`` (dense, row-stochastic) and ``L_A`` (dense)."""

    knn: NeighborIndex
    V: np.ndarray
    L_A: np.ndarray

    def operator(self) -> LinearOperator:
        """``L_A`` as a linear operator applied through the sparse ``I - V``."""
        M = sp.identity(self.V.shape[0], format="csr") - sp.csr_matrix(self.V)
        Mt = M.T.tocsr()
        N = self.V.shape[0]
        return LinearOperator((N, N), matvec=lambda v: Mt @ (M @ v),
                              matmat=lambda B: Mt @ (M @ B),
                              dtype=np.float64)


def weights_from_neighbors(X: np.ndarray, knn: NeighborIndex) -> np.ndarray:
    N = X.shape[1]
    V = np.zeros((N, N))
    for i in range(N):
        nb = knn.indices[i]
        V[i, nb] = lle_weights(X[:, i], X[:, nb])
    return V


def sample_graph_from_weights(knn: NeighborIndex, V: np.ndarray) -> SampleGraph:
    M = sp.identity(V.shape[0], format="csr") - sp.csr_matrix(V)
    L_A = (M.T @ M).toarray()
    L_A = 0.5 * (L_A + L_A.T)
    return SampleGraph(knn, V, L_A)


def build_sample_graph(X: np.ndarray, k: int) -> SampleGraph:
    """k-NN search, per-sample LLE weights and ``L_A = I - V - V^T + V^T V``."""
    knn = find_knn(X, k)
    return sample_graph_from_weights(knn, weights_from_neighbors(X, knn))
