"""IDX file reading and writing, and labelled/unlabelled subset sampling.

IDX layout (big-endian): a 32-bit magic ``0x00000803`` for images or
``0x00000801`` for labels, one 32-bit size per dimension, then unsigned bytes.
Paths ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .core import Dataset, InvalidArgumentError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
N_DIGITS = 10


class IDXFormatError(ValueError):
    """Wrong magic number or impossible header."""


class IDXLengthError(IDXFormatError):
    """File shorter than its header promises."""


class StratificationError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse(data: bytes, magic: int, ndim: int, path) -> tuple:
    header = 4 * (ndim + 1)
    if len(data) < 4:
        raise IDXLengthError(f"{path}: file too short for an IDX magic number")
    (observed,) = struct.unpack(">I", data[:4])
    if observed != magic:
        raise IDXFormatError(
            f"{path}: magic 0x{observed:08x}, expected 0x{magic:08x}")
    if len(data) < header:
        raise IDXLengthError(f"{path}: truncated header ({len(data)} bytes)")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    payload = data[header:]
    if len(payload) < size:
        raise IDXLengthError(
            f"{path}: expected {size} data bytes, found {len(payload)}")
    return dims, np.frombuffer(payload, dtype=np.uint8, count=size)


def read_idx_images_raw(path) -> np.ndarray:
    """Images as a ``count x rows x cols`` uint8 array."""
    dims, values = _parse(_read_bytes(path), IMAGE_MAGIC, 3, path)
    return values.reshape(dims)


def load_idx_images(path) -> np.ndarray:
    """Images as a ``(rows * cols) x count`` matrix scaled into [0, 1].

    Column ``j`` holds image ``j`` in file byte order.
    """
    raw = read_idx_images_raw(path)
    count = raw.shape[0]
    return raw.reshape(count, -1).T.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    (count,), values = _parse(_read_bytes(path), LABEL_MAGIC, 1, path)
    if values.size and values.max() >= N_DIGITS:
        raise ValueError(f"{path}: label value {values.max()} outside 0..9")
    return values.astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    """Write a ``count x rows x cols`` uint8 array as an IDX image file."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise InvalidArgumentError("images must be a 3-D uint8 array")
    data = struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes()
    _write_bytes(path, data)


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0
                                             or labels.max() > 255)):
        raise InvalidArgumentError("labels must be a 1-D array of bytes")
    data = struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.astype(
        np.uint8).tobytes()
    _write_bytes(path, data)


def _write_bytes(path, data: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


def sample_subset(images: np.ndarray, labels: np.ndarray, n_train: int,
                  n_test: int, seed: int, n_classes: int = None) -> Dataset:
    """Stratified labelled block followed by a uniform unlabelled block.

    Each class gets ``n_train // c`` labelled samples, the first
    ``n_train % c`` classes one more. Unlabelled samples are drawn uniformly
    from what is left. ``images`` is ``n x count`` with samples as columns.
    """
    labels = np.asarray(labels, dtype=np.int64)
    total = labels.size
    if images.shape[1] != total:
        raise InvalidArgumentError(
            f"{images.shape[1]} images but {total} labels")
    if n_train < 0 or n_test < 0 or n_train + n_test > total:
        raise InvalidArgumentError(
            f"cannot draw {n_train} + {n_test} samples from {total}")
    c = n_classes if n_classes is not None else int(labels.max()) + 1
    if n_train < c:
        raise StratificationError(
            f"cannot stratify {n_train} labelled samples over {c} classes")
    rng = np.random.default_rng(seed)
    per_class = np.full(c, n_train // c)
    per_class[:n_train % c] += 1
    chosen = []
    for cls in range(c):
        pool = np.nonzero(labels == cls)[0]
        if pool.size < per_class[cls]:
            raise StratificationError(
                f"class {cls} has {pool.size} samples, {per_class[cls]} needed")
        chosen.append(rng.choice(pool, per_class[cls], replace=False))
    train_idx = np.sort(np.concatenate(chosen))
    rest = np.setdiff1d(np.arange(total), train_idx)
    test_idx = rng.choice(rest, n_test, replace=False)
    ids = np.concatenate([train_idx, test_idx])
    return Dataset.from_labels(images[:, ids], labels[train_idx], c,
                               y_test=labels[test_idx], sample_ids=ids)
