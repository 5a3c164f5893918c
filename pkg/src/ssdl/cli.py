"""Command-line entry point: load IDX files, sample, train, evaluate, export."""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Hyperparameters
from .mnist_io import load_idx_images, load_idx_labels, sample_subset
from .pipeline import (DG_DL, SS_DG_DL, evaluate, sample_codes, save_model,
                       train)

logger = logging.getLogger("ssdl")

METHOD_FLAGS = {"ss-dg-dl": SS_DG_DL, "dg-dl": DG_DL}
METRICS_FILE = "metrics.json"
CODES_FILE = "codes.csv"
MODEL_FILE = "model.ssdl"


@dataclass
class RunConfig:
    images: Path
    labels: Path
    n_train: int
    n_test: int
    method: str = "ss-dg-dl"
    out: Path = Path("ssdl-run")
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    export_codes: bool = False
    export_model: bool = False
    export_metrics: bool = True


def effective_hyperparameters(method: str, n_train: int, n_total: int,
                              hp: Hyperparameters) -> Hyperparameters:
    """Shrink ``k`` when the sample graph has fewer candidates than requested.

    DG-DL builds its graph over the labelled block only, so with 50 labels
    the default of 66 neighbours is clipped to 49.
    """
    pool = n_train if method == DG_DL else n_total
    if hp.k < pool:
        return hp
    k = max(pool - 1, 1)
    logger.warning("k=%d is too large for %d samples; using k=%d", hp.k, pool, k)
    return hp.replace(k=k)


def _thread_limit():
    value = os.environ.get("SSDL_THREADS")
    if not value:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(value))


def write_codes_csv(path, ds, codes: np.ndarray) -> None:
    """One row per sample: id, split, true label, then the code entries."""
    labels = np.concatenate([ds.y_train,
                             ds.y_test if ds.y_test is not None
                             else np.full(ds.N_test, -1)])
    ids = ds.sample_ids if ds.sample_ids is not None else np.arange(ds.N)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "split", "true_label"]
                        + [f"a{j}" for j in range(codes.shape[0])])
        for col in range(ds.N):
            split = "train" if col < ds.N_train else "test"
            writer.writerow([int(ids[col]), split, int(labels[col])]
                            + [repr(float(v)) for v in codes[:, col]])


def run(config: RunConfig) -> int:
    """Execute one job; returns a process exit status."""
    try:
        with _thread_limit():
            return _run(config)
    except Exception as exc:  # report every stage failure the same way
        print(f"ssdl: error: {exc}", file=sys.stderr)
        logger.debug("run failed", exc_info=True)
        return 1


def _run(config: RunConfig) -> int:
    if config.method not in METHOD_FLAGS:
        raise ValueError(f"unknown method {config.method!r}")
    method = METHOD_FLAGS[config.method]
    started = time.perf_counter()
    images = load_idx_images(config.images)
    labels = load_idx_labels(config.labels)
    if images.shape[1] != labels.size:
        raise ValueError(f"{config.images} has {images.shape[1]} images but "
                         f"{config.labels} has {labels.size} labels")
    hp = config.hp
    ds = sample_subset(images, labels, config.n_train, config.n_test, hp.seed)
    hp = effective_hyperparameters(method, ds.N_train, ds.N, hp)
    model = train(ds, hp, method)
    codes = sample_codes(model, ds, hp)
    report = evaluate(model, ds, hp, codes=codes)
    elapsed = time.perf_counter() - started

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.export_metrics:
        metrics = {
            "method": config.method,
            "seed": hp.seed,
            "hyperparameters": hp.as_dict(),
            "train_accuracy": report.train_accuracy,
            "test_accuracy": report.test_accuracy,
            "surrogate_test_accuracy": report.surrogate_test_accuracy,
            "objective_trace": model.objective_trace,
            "wall_time_seconds": elapsed,
        }
        (out / METRICS_FILE).write_text(json.dumps(metrics, indent=2) + "\n")
    if config.export_codes:
        write_codes_csv(out / CODES_FILE, ds, codes)
    if config.export_model:
        save_model(model, out / MODEL_FILE)
    logger.info("%s: train %.4f, test %.4f, k-NN test %s (%.1fs)",
                method, report.train_accuracy, report.test_accuracy,
                report.surrogate_test_accuracy, elapsed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    defaults = Hyperparameters()
    parser = argparse.ArgumentParser(
        prog="ssdl",
        description="Dual-graph regularised dictionary learning on IDX data.")
    parser.add_argument("--method", choices=sorted(METHOD_FLAGS),
                        default="ss-dg-dl")
    parser.add_argument("--images", type=Path, required=True,
                        help="IDX image file (optionally .gz)")
    parser.add_argument("--labels", type=Path, required=True,
                        help="IDX label file (optionally .gz)")
    parser.add_argument("--n-train", type=int, required=True,
                        help="labelled samples (stratified over classes)")
    parser.add_argument("--n-test", type=int, required=True,
                        help="unlabelled samples")
    parser.add_argument("--seed", type=int, default=defaults.seed)
    parser.add_argument("--out", type=Path, default=Path("ssdl-run"))
    parser.add_argument("--export-codes", action="store_true")
    parser.add_argument("--export-model", action="store_true")
    parser.add_argument("--no-metrics", action="store_true",
                        help="skip writing metrics.json")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    for f in dataclasses.fields(Hyperparameters):
        if f.name == "seed":
            continue
        flags = [f"--{f.name.replace('_', '-')}"]
        if f.name == "lam":
            flags.insert(0, "--lambda")
        parser.add_argument(*flags, dest=f.name, type=type(f.default),
                            default=f.default, metavar=f.name.upper())
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    names = [f.name for f in dataclasses.fields(Hyperparameters)]
    hp = Hyperparameters(**{name: getattr(args, name) for name in names})
    return RunConfig(images=args.images, labels=args.labels,
                     n_train=args.n_train, n_test=args.n_test,
                     method=args.method, out=args.out, hp=hp,
                     export_codes=args.export_codes,
                     export_model=args.export_model,
                     export_metrics=not args.no_metrics)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1
        else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except ValueError as exc:
        print(f"ssdl: error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
