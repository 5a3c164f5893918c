"""Training and evaluation of the dual-graph dictionary learners.

``train_ss_dg_dl`` learns from every column of the dataset (labelled and
unlabelled); ``train_dg_dl`` sees the labelled block only and codes unseen
samples afterwards with :func:`code_test_samples_dg_dl`.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (Dataset, Hyperparameters, InvalidArgumentError,
                   normalize_columns, objective_value)
from .feature_graph import FeatureGraph, learn_feature_graph
from .lle_graph import SampleGraph, build_sample_graph, knn_query, lle_weights
from .solvers import (StepReport, classifier_update_step, code_columns,
                      dictionary_update_step, sparse_coding_step)

logger = logging.getLogger(__name__)

SS_DG_DL = "SS-DG-DL"
DG_DL = "DG-DL"
METHODS = (SS_DG_DL, DG_DL)


@dataclass
class TrainedModel:
    D: np.ndarray
    A: np.ndarray
    W: np.ndarray
    L_A: np.ndarray
    L_D: np.ndarray
    method_tag: str
    objective_trace: List[float] = field(default_factory=list)
    step_reports: List[StepReport] = field(default_factory=list)

    @property
    def n_atoms(self) -> int:
        return self.D.shape[1]


@dataclass(frozen=True)
class EvalReport:
    """Accuracies of the linear classifier; ``confusion`` is over the test block.

    Rows of a confusion matrix are true classes, columns predictions.
    """

    train_accuracy: float
    test_accuracy: float
    confusion: np.ndarray
    train_confusion: np.ndarray
    surrogate_test_accuracy: Optional[float] = None


def initialize(ds: Dataset, hp: Hyperparameters):
    """Random unit-norm dictionary, LASSO codes, then the ridge classifier."""
    rng = np.random.default_rng(hp.seed)
    D = normalize_columns(rng.standard_normal((ds.n_features, hp.p)))
    lasso_hp = hp.replace(beta=0.0, gamma=0.0)
    A, _ = sparse_coding_step(ds, D, np.zeros((hp.p, ds.N)),
                              np.zeros((ds.n_classes, hp.p)), None, lasso_hp)
    W = classifier_update_step(A[:, :ds.N_train], ds.Y_train, hp.gamma, hp.mu)
    return D, A, W


def _alternate(ds: Dataset, hp: Hyperparameters, method: str) -> TrainedModel:
    if hp.k >= ds.N:
        raise InvalidArgumentError(f"k={hp.k} must be smaller than N={ds.N}")
    feature_graph: FeatureGraph = learn_feature_graph(
        ds.X, hp.theta, hp.graph_iters, hp.graph_tol)
    sample_graph: SampleGraph = build_sample_graph(ds.X, hp.k)
    L_D, L_A = feature_graph.L_D, sample_graph.L_A
    L_A_op = sample_graph.operator()
    rng = np.random.default_rng([hp.seed, 1])

    D, A, W = initialize(ds, hp)
    trace = [objective_value(ds, D, A, W, L_A, L_D, hp)]
    reports: List[StepReport] = []
    for outer in range(hp.outer_iters):
        A, rep_a = sparse_coding_step(ds, D, A, W, L_A_op, hp)
        D, rep_d = dictionary_update_step(ds, D, A, L_D, hp, rng)
        W = classifier_update_step(A[:, :ds.N_train], ds.Y_train, hp.gamma,
                                   hp.mu)
        reports += [rep_a, rep_d]
        trace.append(objective_value(ds, D, A, W, L_A, L_D, hp))
        logger.debug("%s round %d: objective %.6g", method, outer + 1,
                     trace[-1])
        change = abs(trace[-2] - trace[-1]) / max(abs(trace[-2]),
                                                  np.finfo(float).tiny)
        if change < hp.tol:
            break
    return TrainedModel(D, A, W, L_A, L_D, method, trace, reports)


def train_ss_dg_dl(ds: Dataset, hp: Hyperparameters) -> TrainedModel:
    """Semi-supervised training: graphs and codes cover every sample."""
    if ds.N_train < 1:
        raise InvalidArgumentError("need at least one labelled sample")
    return _alternate(ds, hp, SS_DG_DL)


def train_dg_dl(ds: Dataset, hp: Hyperparameters) -> TrainedModel:
    """Supervised training on the labelled block only."""
    if ds.N_train < hp.k + 1:
        raise InvalidArgumentError(
            f"DG-DL needs N_train >= k + 1 (N_train={ds.N_train}, k={hp.k})")
    return _alternate(ds.labelled(), hp, DG_DL)


def train(ds: Dataset, hp: Hyperparameters, method: str) -> TrainedModel:
    if method == SS_DG_DL:
        return train_ss_dg_dl(ds, hp)
    if method == DG_DL:
        return train_dg_dl(ds, hp)
    raise InvalidArgumentError(f"unknown method {method!r}")


def code_test_samples_dg_dl(X_test: np.ndarray, model: TrainedModel,
                            ds_train: Dataset,
                            hp: Hyperparameters) -> np.ndarray:
    """Codes for unseen columns under a DG-DL model.

    For each sample the LLE weights over its ``k`` nearest training samples
    give an anchor ``sum_j w_j a_j``; the code then minimises
    ``||x - D a||^2 + beta ||a - anchor||^2 + lam ||a||_1``.
    """
    if model.method_tag != DG_DL:
        raise InvalidArgumentError(
            f"test coding needs a {DG_DL} model, got {model.method_tag}")
    X_train = ds_train.X_train
    A_train = model.A[:, :ds_train.N_train]
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_test.ndim == 1:
        X_test = X_test[:, None]
    m = X_test.shape[1]
    anchors = np.zeros((model.n_atoms, m))
    if m == 0:
        return anchors
    knn = knn_query(X_test, X_train, hp.k)
    for i in range(m):
        nb = knn.indices[i]
        anchors[:, i] = A_train[:, nb] @ lle_weights(X_test[:, i], X_train[:, nb])
    return code_columns(X_test, model.D, anchors, hp.beta, hp.lam, hp.sc_iters,
                        hp.tol, A0=anchors)


def code_test_sample_dg_dl(x_test: np.ndarray, model: TrainedModel,
                           ds_train: Dataset,
                           hp: Hyperparameters) -> np.ndarray:
    return code_test_samples_dg_dl(np.asarray(x_test)[:, None], model, ds_train,
                                   hp)[:, 0]


def classify(W: np.ndarray, a: np.ndarray) -> int:
    """Row of ``W a`` with the largest score (lowest index on ties)."""
    return int(np.argmax(W @ a))


def predict(W: np.ndarray, A: np.ndarray) -> np.ndarray:
    return np.argmax(W @ A, axis=0)


def knn_surrogate_predict(A_train: np.ndarray, Y_train: np.ndarray,
                          A_query: np.ndarray, k_cls: int) -> np.ndarray:
    """Majority vote among the ``k_cls`` nearest training codes.

    Neighbour ties go to the lower training index, vote ties to the lower
    class index.
    """
    if k_cls > A_train.shape[1]:
        raise InvalidArgumentError(
            f"k_cls={k_cls} exceeds the {A_train.shape[1]} training codes")
    if A_query.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    labels = np.argmax(Y_train, axis=0)
    knn = knn_query(A_query, A_train, k_cls)
    c = Y_train.shape[0]
    votes = np.zeros((A_query.shape[1], c), dtype=np.int64)
    np.add.at(votes, (np.arange(A_query.shape[1])[:, None], labels[knn.indices]),
              1)
    return np.argmax(votes, axis=1)


def knn_surrogate_classify(A_train: np.ndarray, Y_train: np.ndarray,
                           a_query: np.ndarray, k_cls: int) -> int:
    return int(knn_surrogate_predict(A_train, Y_train, a_query[:, None],
                                     k_cls)[0])


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64),
                   np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def _accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else float("nan")


def sample_codes(model: TrainedModel, ds: Dataset,
                 hp: Hyperparameters) -> np.ndarray:
    """Codes for every column of ``ds`` (test columns coded on demand for DG-DL)."""
    if model.method_tag == SS_DG_DL:
        if model.A.shape[1] != ds.N:
            raise InvalidArgumentError("model codes do not match the dataset")
        return model.A
    A_test = code_test_samples_dg_dl(ds.X_test, model, ds, hp)
    return np.hstack([model.A[:, :ds.N_train], A_test])


def evaluate(model: TrainedModel, ds: Dataset, hp: Hyperparameters,
             surrogate: bool = True, codes: Optional[np.ndarray] = None
             ) -> EvalReport:
    """Linear-classifier accuracy on both blocks, plus the k-NN surrogate.

    Test figures need ``ds.y_test``; without it they are NaN.
    """
    if codes is None:
        codes = sample_codes(model, ds, hp)
    c = ds.n_classes
    A_train, A_test = codes[:, :ds.N_train], codes[:, ds.N_train:]
    train_cm = confusion_matrix(ds.y_train, predict(model.W, A_train), c)
    if ds.y_test is None or ds.N_test == 0:
        test_cm = np.zeros((c, c), dtype=np.int64)
        surrogate_acc = None
    else:
        test_cm = confusion_matrix(ds.y_test, predict(model.W, A_test), c)
        surrogate_acc = None
        if surrogate:
            k_cls = min(hp.k_cls, ds.N_train)
            pred = knn_surrogate_predict(A_train, ds.Y_train, A_test, k_cls)
            surrogate_acc = float(np.mean(pred == ds.y_test))
    return EvalReport(_accuracy(train_cm), _accuracy(test_cm), test_cm,
                      train_cm, surrogate_acc)


# Model container: b"SSDL", u32 version, then D, A, W, L_A, L_D, each as
# u64 rows, u64 cols and row-major float64; then u32 method code and the
# objective trace as a 1 x T matrix. Everything little-endian.
MAGIC = b"SSDL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _write_matrix(buf, M: np.ndarray) -> None:
    M = np.ascontiguousarray(M, dtype="<f8")
    buf.write(struct.pack("<QQ", *M.shape))
    buf.write(M.tobytes(order="C"))


def _read_exact(buf, size: int) -> bytes:
    data = buf.read(size)
    if len(data) != size:
        raise ModelFormatError(f"truncated model file: wanted {size} bytes, "
                               f"got {len(data)}")
    return data


def _read_matrix(buf) -> np.ndarray:
    rows, cols = struct.unpack("<QQ", _read_exact(buf, 16))
    data = _read_exact(buf, 8 * rows * cols)
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)


def model_to_bytes(model: TrainedModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    for M in (model.D, model.A, model.W, model.L_A, model.L_D):
        _write_matrix(buf, M)
    buf.write(struct.pack("<I", METHODS.index(model.method_tag)))
    _write_matrix(buf, np.asarray(model.objective_trace, dtype=np.float64)[None, :])
    return buf.getvalue()


def model_from_bytes(data: bytes) -> TrainedModel:
    buf = io.BytesIO(data)
    magic = buf.read(4)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", _read_exact(buf, 4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    D, A, W, L_A, L_D = (_read_matrix(buf) for _ in range(5))
    (code,) = struct.unpack("<I", _read_exact(buf, 4))
    if code >= len(METHODS):
        raise ModelFormatError(f"unknown method code {code}")
    trace = _read_matrix(buf).ravel().tolist()
    extra = len(buf.read())
    if extra:
        raise ModelFormatError(f"{extra} unexpected trailing bytes")
    return TrainedModel(D, A, W, L_A, L_D, METHODS[code], trace)


def save_model(model: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
