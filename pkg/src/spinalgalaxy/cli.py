"""Command-line interface: synth, train, eval, sweep, predict.

Exit codes: 0 success, 1 usage error (one-line diagnostic), 2 runtime
failure (decode, filesystem, configuration). All randomness derives from
--seed. SPINAL_THREADS caps BLAS parallelism (default 1, for bit-exact
determinism across runs).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .backbone import BackboneConfig, build_model
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, LoadReport, load_image_folder, normalize, resize_bilinear, stratified_split
from .errors import SpinalError
from .fileio import write_bytes_atomic, write_text_atomic
from .pnm import decode_image
from .report import RunRecord, confusion_heatmap_pgm, confusion_to_csv, metrics_to_json
from .seeds import STREAM_MODEL, child_seed
from .synth import synth_generate
from .taxonomy import class_names
from .train import TrainConfig, evaluate, fit, predict, predict_tta

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.7

_thread_limiter = None


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 with a one-line diagnostic, not argparse's 2
        raise _UsageError(message)


def _cap_threads() -> None:
    global _thread_limiter
    limit = max(1, int(os.environ.get("SPINAL_THREADS", "1")))
    try:
        import threadpoolctl
        _thread_limiter = threadpoolctl.threadpool_limits(limits=limit)
    except ImportError:
        logger.debug("threadpoolctl unavailable; BLAS thread cap not enforced")


def build_parser() -> _Parser:
    parser = _Parser(prog="spinalgalaxy", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="generate a synthetic galaxy dataset")
    synth.add_argument("--level", type=int, choices=(2, 3, 10), required=True)
    synth.add_argument("--per-class", type=int, required=True)
    synth.add_argument("--image-size", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    def add_train_flags(p, with_width=True):
        p.add_argument("--data", required=True)
        p.add_argument("--level", type=int, choices=(2, 3, 10), required=True)
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--lr", type=float, default=1e-3)
        if with_width:
            p.add_argument("--width", type=int, default=32)
        p.add_argument("--segments", type=int, default=2)
        p.add_argument("--layers", type=int, default=4)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--image-size", type=int, default=64)
        p.add_argument("--min-confidence", type=float, default=None)
        p.add_argument("--metadata", default=None)
        p.add_argument("--out", required=True)

    add_train_flags(sub.add_parser("train", help="train a model on a folder-per-class dataset"))

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report-dir", required=True)

    sweep = sub.add_parser("sweep", help="train once per hidden-row width")
    sweep.add_argument("--widths", required=True,
                       help="comma-separated widths, e.g. 8,16,24,32")
    add_train_flags(sweep, with_width=False)

    pred = sub.add_parser("predict", help="classify a single image")
    pred.add_argument("--model", required=True)
    pred.add_argument("--image", required=True)
    pred.add_argument("--tta", action="store_true")
    return parser


def _dataset_summary(dataset: Dataset, report: LoadReport | None = None) -> dict:
    summary = {
        "class_names": list(dataset.class_names),
        "per_class_train": dataset.per_class_counts("train") if dataset.split else None,
        "per_class_test": dataset.per_class_counts("test") if dataset.split else None,
        "per_class_total": dataset.per_class_counts(),
    }
    if report is not None:
        summary["loaded"] = report.loaded
        summary["skipped_undecodable"] = report.skipped_undecodable
        summary["filtered_low_confidence"] = report.filtered_low_confidence
    return summary


def _train_one(args, width: int, out_path: Path) -> float:
    """Shared by train and sweep; returns test accuracy."""
    t0 = time.perf_counter()
    dataset, load_report = load_image_folder(
        args.data, args.level, image_size=args.image_size,
        min_confidence=args.min_confidence, metadata=args.metadata)
    dataset = stratified_split(dataset, TRAIN_FRACTION, args.seed)
    backbone = BackboneConfig(image_size=args.image_size)
    model = build_model(backbone, width, args.segments, args.layers,
                        list(class_names(args.level)),
                        child_seed(args.seed, STREAM_MODEL, width))
    config = TrainConfig(args.epochs, args.batch, args.lr, args.seed,
                         width, args.segments, args.layers)
    history = fit(model, dataset, config)
    report = evaluate(model, dataset)
    wall = time.perf_counter() - t0

    echo = {
        "data": str(args.data), "level": args.level, "epochs": args.epochs,
        "batch": args.batch, "lr": args.lr, "width": width,
        "segments": args.segments, "layers": args.layers, "seed": args.seed,
        "image_size": args.image_size, "train_fraction": TRAIN_FRACTION,
        "min_confidence": args.min_confidence,
        "metadata": str(args.metadata) if args.metadata else None,
    }
    save_checkpoint(out_path, model, {
        "level": args.level, "seed": args.seed, "train_fraction": TRAIN_FRACTION,
        "min_confidence": args.min_confidence,
        "metadata": str(args.metadata) if args.metadata else None,
    })
    record = RunRecord("train", echo, _dataset_summary(dataset, load_report),
                       report, history, wall)
    write_text_atomic(Path(str(out_path) + ".json"), metrics_to_json(record))
    print(f"width {width}: test accuracy {report.accuracy:.6f} "
          f"on {report.n_test} images ({wall:.1f} s)")
    return report.accuracy


def _cmd_synth(args) -> int:
    t0 = time.perf_counter()
    manifest = synth_generate(args.level, args.per_class, args.image_size,
                              args.seed, args.out)
    wall = time.perf_counter() - t0
    names = list(class_names(args.level))
    echo = {"level": args.level, "per_class": args.per_class,
            "image_size": args.image_size, "seed": args.seed, "out": str(args.out)}
    summary = {"class_names": names, "per_class_total": [args.per_class] * len(names),
               "per_class_train": None, "per_class_test": None}
    record = RunRecord("synth", echo, summary, None, None, wall)
    write_text_atomic(Path(args.out) / "run.json", metrics_to_json(record))
    print(f"wrote {args.per_class * len(names)} images to {args.out} "
          f"(manifest {manifest}) ({wall:.1f} s)")
    return 0


def _cmd_train(args) -> int:
    _train_one(args, args.width, Path(args.out))
    return 0


def _cmd_sweep(args) -> int:
    try:
        widths = [int(w) for w in str(args.widths).split(",") if w.strip()]
    except ValueError:
        raise _UsageError(f"--widths must be comma-separated integers, got {args.widths!r}")
    if not widths:
        raise _UsageError("--widths must name at least one width")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for width in widths:
        _train_one(args, width, out_dir / f"w{width}.spnl")
    return 0


def _cmd_eval(args) -> int:
    t0 = time.perf_counter()
    model, config = load_checkpoint(args.model)
    dataset, load_report = load_image_folder(
        args.data, config["level"], image_size=config["image_size"],
        min_confidence=config.get("min_confidence"), metadata=config.get("metadata"))
    dataset = stratified_split(dataset, config.get("train_fraction", TRAIN_FRACTION),
                               config["seed"])
    report = evaluate(model, dataset)
    wall = time.perf_counter() - t0

    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = {"model": str(args.model), "data": str(args.data),
            "report_dir": str(args.report_dir), "checkpoint": config}
    record = RunRecord("eval", echo, _dataset_summary(dataset, load_report),
                       report, None, wall)
    write_text_atomic(out / "confusion.csv",
                      confusion_to_csv(report, dataset.class_names))
    write_text_atomic(out / "metrics.json", metrics_to_json(record))
    write_bytes_atomic(out / "heatmap.pgm", confusion_heatmap_pgm(report))
    print(f"test accuracy {report.accuracy:.6f} on {report.n_test} images ({wall:.1f} s)")
    return 0


def _cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.model)
    grid = decode_image(Path(args.image).read_bytes())
    image = normalize(resize_bilinear(grid, model.backbone_config.image_size))
    probs, label = (predict_tta if args.tta else predict)(model, image)
    print(f"{model.class_names[label]} {probs[label]:.5f}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "predict": _cmd_predict,
}


def run_cli(argv=None) -> int:
    _cap_threads()
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (SpinalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
