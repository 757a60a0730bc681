"""Command-line experiment driver.

Subcommands: prepare, train, evaluate, predict, report. Exit codes:
0 success, 2 usage error, 3 data error, 4 training divergence,
5 I/O or file corruption. Every failure prints one line to stderr of the
form ``error[<kind>]: <message>``. The SOBELCNN_SEED environment variable
overrides the default seed (0) wherever --seed is omitted.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DataError, DivergenceError, SobelCnnError
from .evaluation import CvResult, confusion, cross_validate, metrics, roc_auc
from .images import (
    LABEL_NAMES,
    load_image,
    load_prepared,
    normalize,
    prepare_dataset,
    resize_bilinear,
    save_prepared,
    sobel,
)
from .network import NetworkSpec, forward
from .runio import (
    CheckpointMeta,
    load_checkpoint,
    read_history,
    read_report,
    save_checkpoint,
    write_config,
    write_curve_charts,
    write_history,
    write_report,
)
from .training import TrainConfig

SEED_ENV = "SOBELCNN_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_IO = 5


def _default_seed() -> int:
    try:
        return int(os.environ.get(SEED_ENV, "0"))
    except ValueError:
        return 0


def _print_metrics(report, prefix: str = "") -> None:
    for name in ("accuracy", "sensitivity", "precision", "f1", "specificity"):
        print(f"{prefix}{name}={getattr(report, name):.6f}")
    if report.auc is not None:
        print(f"{prefix}auc={report.auc:.6f}")
    if report.loss is not None:
        print(f"{prefix}loss={report.loss:.6f}")
    if report.degenerate:
        print(f"{prefix}degenerate={','.join(report.degenerate)}")


def cmd_prepare(args) -> int:
    dataset = prepare_dataset(args.input, seed=args.seed,
                              augment_data=not args.no_augment,
                              target_side=args.input_size)
    manifest = save_prepared(dataset, args.output)
    for name, per_lineage in sorted(manifest["counts"].items()):
        total = sum(per_lineage.values())
        print(f"{name}: {per_lineage['original']} originals -> {total} samples")
    print(f"total={manifest['total']}")
    return EXIT_OK


def _spec_for_data(side: int, head: str) -> NetworkSpec:
    return NetworkSpec(input_side=side, head=head)


def cmd_train(args) -> int:
    dataset = load_prepared(args.data)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        validation_fraction=args.val,
        head=args.head,
        sobel=args.sobel == "on",
        seed=args.seed,
        folds=args.folds,
        leakage_mode=args.mode,
    )
    spec = _spec_for_data(dataset.side, args.head)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    stratified = not args.no_stratify
    write_config(run_dir, config, spec, data_dir=str(args.data),
                 complete=False, stratified=stratified)

    result: CvResult = cross_validate(spec, config, dataset,
                                      stratified=stratified,
                                      threads=args.threads)

    for fold, params in enumerate(result.fold_params):
        meta = CheckpointMeta(spec=spec, sobel=config.sobel,
                              seed=config.seed, fold=fold)
        save_checkpoint(run_dir / f"fold_{fold:02d}.ckpt", meta, params)
    write_history(run_dir, result.fold_histories)
    write_report(run_dir, result, stratified=stratified)
    write_config(run_dir, config, spec, data_dir=str(args.data),
                 complete=True, stratified=stratified)

    print(f"run directory: {run_dir}")
    print("pooled metrics:")
    _print_metrics(result.pooled_metrics, prefix="  ")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    meta, params = load_checkpoint(args.model)
    dataset = load_prepared(args.data)
    if dataset.side != meta.spec.input_side:
        raise DataError(
            f"data side {dataset.side} does not match checkpoint input side "
            f"{meta.spec.input_side}")
    images = []
    labels = []
    for sample in dataset.samples:
        img = sobel(sample.image) if meta.sobel else sample.image
        images.append(normalize(img))
        labels.append(sample.label)
    batch = np.stack(images).astype(np.float32)
    y = np.array(labels, dtype=np.int64)
    outputs, _ = forward(meta.spec, params, batch, training=False)
    predictions = outputs.argmax(axis=1)
    report = metrics(confusion(predictions, y))
    if len(np.unique(y)) == 2:
        report.auc = roc_auc(outputs[:, 1].astype(np.float64), y)
    _print_metrics(report)
    if args.json_out:
        import json
        Path(args.json_out).write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_predict(args) -> int:
    meta, params = load_checkpoint(args.model)
    raw = load_image(args.image)
    img = resize_bilinear(raw, meta.spec.input_side)
    if meta.sobel:
        img = sobel(img)
    batch = normalize(img)[None].astype(np.float32)
    outputs, _ = forward(meta.spec, params, batch, training=False)
    predicted = int(outputs[0].argmax())
    score = float(outputs[0, 1])
    print(f"label={LABEL_NAMES[predicted]} score={score:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if args.format == "csv":
        path = run_dir / "history.csv"
        if not path.is_file():
            raise DataError(f"no history.csv in run directory {run_dir}")
        sys.stdout.write(path.read_text())
    elif args.format == "json":
        import json
        report = read_report(run_dir)
        sys.stdout.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    else:  # svg
        histories = read_history(run_dir)
        for path in write_curve_charts(run_dir, histories):
            print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sobelcnn",
        description="Binary X-ray classification experiments: Sobel "
                    "preprocessing, a small CNN, sigmoid or linear-SVM head.")
    sub = parser.add_subparsers(dest="command", required=True)
    seed_default = _default_seed()

    p = sub.add_parser("prepare", help="decode, augment, resize, and cache a dataset")
    p.add_argument("--input", required=True, help="directory with covid/ and normal/")
    p.add_argument("--output", required=True, help="cache output directory")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--input-size", type=int, default=64)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="cross-validated training run")
    p.add_argument("--data", required=True, help="prepared dataset directory")
    p.add_argument("--head", choices=["sigmoid", "svm"], default="sigmoid")
    p.add_argument("--sobel", choices=["on", "off"], default="off")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--val", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--mode", choices=["paper-faithful", "leak-free"],
                   default="leak-free")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--threads", type=int, default=1,
                   help="parallel fold training (1 = deterministic reference)")
    p.add_argument("--no-stratify", action="store_true",
                   help="plain instead of stratified folds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a prepared dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--json-out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify a single image file")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="export run artifacts")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=["csv", "json", "svg"], required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(f"error[{kind}]: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        return _fail("divergence", exc, EXIT_DIVERGED)
    except CheckpointError as exc:
        return _fail("corrupt", exc, EXIT_IO)
    except SobelCnnError as exc:
        return _fail("data", exc, EXIT_DATA)
    except ValueError as exc:
        # config/flag validation (out-of-range values and the like)
        parser.exit(EXIT_USAGE, f"error[usage]: {exc}\n")
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    return EXIT_OK


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
