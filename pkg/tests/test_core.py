import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdl.core import (Dataset, Hyperparameters, InvalidArgumentError,
                       check_dictionary, objective_value, one_hot)

from _data import random_instance

ZERO = Hyperparameters(lam=0, gamma=0, mu=0, alpha=0, beta=0, theta=0)


def naive_objective(ds, D, A, W, L_A, L_D, hp):
    """Entry-by-entry loops; shares no code path with objective_value."""
    X = ds.X
    n, N = X.shape
    p = D.shape[1]
    rec = sum((X[i, j] - sum(D[i, q] * A[q, j] for q in range(p))) ** 2
              for i in range(n) for j in range(N))
    l1 = sum(abs(A[q, j]) for q in range(p) for j in range(N))
    atom = sum(D[i, q] * L_D[i, r] * D[r, q]
               for q in range(p) for i in range(n) for r in range(n))
    graph = sum(A[q, i] * L_A[i, j] * A[q, j]
                for q in range(p) for i in range(N) for j in range(N))
    lab = sum((ds.Y_train[c, j] - sum(W[c, q] * A[q, j] for q in range(p))) ** 2
              for c in range(ds.n_classes) for j in range(ds.N_train))
    ridge = sum(W[c, q] ** 2 for c in range(W.shape[0]) for q in range(p))
    return (rec + hp.lam * l1 + hp.alpha * atom + hp.beta * graph
            + hp.gamma * lab + hp.mu * ridge)


def test_objective_all_zero():
    rng = np.random.default_rng(0)
    D = rng.standard_normal((4, 3))
    D /= np.linalg.norm(D, axis=0)
    # no labelled columns, otherwise gamma ||Y||^2 survives with W = 0
    ds = Dataset(np.zeros((4, 5)), np.zeros((2, 0)))
    value = objective_value(ds, D, np.zeros((3, 5)), np.zeros((2, 3)),
                            np.eye(5), np.zeros((4, 4)), Hyperparameters())
    assert value == 0.0


def test_objective_scalar_case():
    ds = Dataset(np.array([[1.0]]), np.zeros((2, 0)))
    hp = ZERO.replace(lam=1.0)
    value = objective_value(ds, np.array([[1.0]]), np.array([[2.0]]),
                            np.zeros((2, 1)), np.zeros((1, 1)),
                            np.zeros((1, 1)), hp)
    assert value == 3.0


def test_objective_matches_termwise_oracle():
    rng = np.random.default_rng(1)
    ds, D, A, W, L_A, L_D = random_instance(rng, n=3, N=4, p=3)
    hp = Hyperparameters(lam=0.7, gamma=0.3, mu=0.2, alpha=1.5, beta=0.4)
    assert objective_value(ds, D, A, W, L_A, L_D, hp) == pytest.approx(
        naive_objective(ds, D, A, W, L_A, L_D, hp), rel=1e-12, abs=1e-12)


def test_zero_weights_give_reconstruction_residual():
    rng = np.random.default_rng(2)
    ds, D, A, W, L_A, L_D = random_instance(rng)
    R = ds.X - D @ A
    assert objective_value(ds, D, A, W, L_A, L_D, ZERO) == float(np.sum(R * R))


weights = st.floats(0, 10, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=weights, gamma=weights, mu=weights,
       alpha=weights, beta=weights)
def test_objective_nonnegative(seed, lam, gamma, mu, alpha, beta):
    ds, D, A, W, L_A, L_D = random_instance(np.random.default_rng(seed))
    hp = Hyperparameters(lam=lam, gamma=gamma, mu=mu, alpha=alpha, beta=beta)
    assert objective_value(ds, D, A, W, L_A, L_D, hp) >= 0.0


@pytest.mark.parametrize("which", ["D", "A", "W", "L_A", "L_D"])
def test_objective_rejects_bad_shapes(which):
    rng = np.random.default_rng(3)
    ds, D, A, W, L_A, L_D = random_instance(rng, n=4, N=6, p=3)
    args = dict(D=D, A=A, W=W, L_A=L_A, L_D=L_D)
    args[which] = np.zeros((args[which].shape[0] + 1, args[which].shape[1]))
    with pytest.raises(InvalidArgumentError):
        objective_value(ds, hp=Hyperparameters(), **args)


def test_dataset_blocks_and_immutability():
    X = np.arange(12, dtype=float).reshape(3, 4) / 12
    ds = Dataset.from_labels(X, [1, 0, 1], 2, y_test=[0])
    assert (ds.N, ds.N_train, ds.N_test, ds.n_classes) == (4, 3, 1, 2)
    np.testing.assert_array_equal(ds.X_test, X[:, 3:])
    np.testing.assert_array_equal(ds.y_train, [1, 0, 1])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 5.0
    lab = ds.labelled()
    assert lab.N_test == 0 and lab.N == 3


@pytest.mark.parametrize("Y", [
    np.array([[1.0, 1.0], [1.0, 0.0]]),   # column sums to 2
    np.array([[0.5, 1.0], [0.5, 0.0]]),   # not binary
    np.array([[1.0, 1.0]]),               # one class
])
def test_dataset_rejects_bad_labels(Y):
    with pytest.raises(InvalidArgumentError):
        Dataset(np.zeros((2, 3)), Y)


def test_one_hot_range_check():
    np.testing.assert_array_equal(one_hot([2, 0], 3), [[0, 1], [0, 0], [1, 0]])
    with pytest.raises(InvalidArgumentError):
        one_hot([3], 3)


@pytest.mark.parametrize("bad", [dict(lam=-1), dict(mu=float("nan")),
                                 dict(k=0), dict(sc_iters=0), dict(p=0)])
def test_hyperparameter_validation(bad):
    with pytest.raises(InvalidArgumentError):
        Hyperparameters(**bad)


def test_hyperparameter_defaults():
    hp = Hyperparameters()
    assert (hp.gamma, hp.mu, hp.alpha, hp.lam, hp.theta, hp.beta, hp.k, hp.p) \
        == (0.2, 0.1, 10.0, 0.5, 2.0, 0.5, 66, 64)


def test_check_dictionary():
    check_dictionary(np.eye(3))
    with pytest.raises(InvalidArgumentError):
        check_dictionary(2 * np.eye(3))
