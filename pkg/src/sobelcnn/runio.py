"""Run-directory artifacts: checkpoints, config/history/report files, SVG charts.

Checkpoint layout (all integers little-endian):
  magic b"CXSV" | version u8 (=1) | metadata length u32 | metadata JSON (utf-8)
  | parameter tensors as float32 in declaration order | CRC-32 of that blob u32

All writers are deterministic: identical inputs produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DataError
from .evaluation import ConfusionMatrix, CvResult, MetricsReport
from .network import NetworkSpec, ParamSet, param_shapes
from .training import RunHistory, TrainConfig

CHECKPOINT_MAGIC = b"CXSV"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sBI")

CONFIG_NAME = "config.json"
HISTORY_NAME = "history.csv"
REPORT_NAME = "report.json"
LOSS_SVG_NAME = "curves_loss.svg"
ACC_SVG_NAME = "curves_accuracy.svg"


@dataclass
class CheckpointMeta:
    spec: NetworkSpec
    sobel: bool
    seed: int
    fold: int

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "head": self.spec.head,
            "sobel": self.sobel,
            "input_side": self.spec.input_side,
            "seed": self.seed,
            "fold": self.fold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CheckpointMeta":
        return cls(spec=NetworkSpec.from_dict(d["spec"]), sobel=bool(d["sobel"]),
                   seed=int(d["seed"]), fold=int(d["fold"]))


def save_checkpoint(path: str | Path, meta: CheckpointMeta,
                    params: ParamSet) -> None:
    meta_bytes = json.dumps(meta.to_dict(), sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(t, dtype="<f4").tobytes()
                    for t in params.tensors())
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta_bytes))
    crc = struct.pack("<I", zlib.crc32(blob))
    Path(path).write_bytes(header + meta_bytes + blob + crc)


def load_checkpoint(path: str | Path) -> tuple[CheckpointMeta, ParamSet]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise CheckpointError(f"checkpoint truncated: {path}")
    magic, version, meta_len = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} in {path}")
    meta_end = _HEADER.size + meta_len
    if len(raw) < meta_end + 4:
        raise CheckpointError(f"checkpoint metadata overruns file: {path}")
    try:
        meta = CheckpointMeta.from_dict(json.loads(raw[_HEADER.size:meta_end]))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint metadata: {path}") from exc

    blob = raw[meta_end:-4]
    shapes = param_shapes(meta.spec)
    expected = sum(int(np.prod(s)) for _, s in shapes) * 4
    if len(blob) != expected:
        raise CheckpointError(
            f"checkpoint weight blob is {len(blob)} bytes, expected {expected}: {path}")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(blob) != stored_crc:
        raise CheckpointError(f"checkpoint weight checksum mismatch: {path}")

    tensors = []
    offset = 0
    for _, shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", offset=offset, count=count)
        tensors.append(arr.reshape(shape).astype(np.float32))
        offset += count * 4
    n_conv = len(meta.spec.conv_blocks)
    conv_w = tensors[0:2 * n_conv:2]
    conv_b = tensors[1:2 * n_conv:2]
    dense_w = tensors[2 * n_conv::2]
    dense_b = tensors[2 * n_conv + 1::2]
    return meta, ParamSet(conv_w, conv_b, dense_w, dense_b)


# ---------------------------------------------------------------------------
# Run directory files
# ---------------------------------------------------------------------------

def _dump_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_config(run_dir: Path, config: TrainConfig, spec: NetworkSpec,
                 data_dir: str, complete: bool, stratified: bool = True) -> None:
    _dump_json(run_dir / CONFIG_NAME, {
        "complete": complete,
        "config": config.to_dict(),
        "spec": spec.to_dict(),
        "seed": config.seed,
        "data_dir": data_dir,
        "stratified": stratified,
    })


def read_config(run_dir: Path) -> dict:
    path = run_dir / CONFIG_NAME
    if not path.is_file():
        raise DataError(f"no {CONFIG_NAME} in run directory {run_dir}")
    return json.loads(path.read_text())


def write_history(run_dir: Path, histories: list[RunHistory]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fold", "epoch", "train_loss", "train_acc",
                     "val_loss", "val_acc"])
    for fold, history in enumerate(histories):
        for epoch, (tl, ta, vl, va) in enumerate(history.rows(), start=1):
            writer.writerow([fold, epoch, repr(tl), repr(ta), repr(vl), repr(va)])
    (run_dir / HISTORY_NAME).write_text(buf.getvalue())


def read_history(run_dir: Path) -> list[RunHistory]:
    path = run_dir / HISTORY_NAME
    if not path.is_file():
        raise DataError(f"no {HISTORY_NAME} in run directory {run_dir}")
    histories: dict[int, RunHistory] = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            fold = int(row["fold"])
            histories.setdefault(fold, RunHistory()).append(
                float(row["train_loss"]), float(row["train_acc"]),
                float(row["val_loss"]), float(row["val_acc"]))
    return [histories[f] for f in sorted(histories)]


def _metrics_block(cm: ConfusionMatrix, report: MetricsReport) -> dict:
    return {"confusion": cm.to_dict(), "metrics": report.to_dict()}


def write_report(run_dir: Path, result: CvResult, stratified: bool = True) -> None:
    _dump_json(run_dir / REPORT_NAME, {
        "config": result.config.to_dict(),
        "spec": result.spec.to_dict(),
        "seed": result.seed,
        "stratified": stratified,
        "folds": [
            {"fold": i, **_metrics_block(cm, rep)}
            for i, (cm, rep) in enumerate(zip(result.fold_confusions,
                                              result.fold_metrics))
        ],
        "pooled": _metrics_block(result.pooled_confusion, result.pooled_metrics),
    })


def read_report(run_dir: Path) -> dict:
    path = run_dir / REPORT_NAME
    if not path.is_file():
        raise DataError(f"no {REPORT_NAME} in run directory {run_dir}")
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# SVG curve charts: one polyline per fold, emitted without any plotting
# dependency. Axis furniture uses <line>/<text> so the polyline count equals
# the fold count exactly.
# ---------------------------------------------------------------------------

_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 40, 45


def render_curves_svg(series_per_fold: list[list[float]], title: str,
                      y_label: str) -> str:
    """Render one polyline per fold over epochs 1..n."""
    n_epochs = max((len(s) for s in series_per_fold), default=0)
    values = [v for s in series_per_fold for v in s]
    lo = min(values, default=0.0)
    hi = max(values, default=1.0)
    if hi == lo:
        hi = lo + 1.0
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def sx(epoch: int) -> float:
        if n_epochs <= 1:
            return _ML + plot_w / 2
        return _ML + (epoch - 1) * plot_w / (n_epochs - 1)

    def sy(value: float) -> float:
        return _MT + (hi - value) / (hi - lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        f'stroke="black"/>',
        f'<text x="{_W / 2:.1f}" y="{_H - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">epoch</text>',
        f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_H / 2:.1f})">{y_label}</text>',
        f'<text x="{_ML - 6}" y="{sy(hi) + 4:.1f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{hi:.3g}</text>',
        f'<text x="{_ML - 6}" y="{sy(lo) + 4:.1f}" text-anchor="end" '
        f'font-family="sans-serif" font-size="10">{lo:.3g}</text>',
    ]
    for fold, series in enumerate(series_per_fold):
        color = _PALETTE[fold % len(_PALETTE)]
        points = " ".join(f"{sx(e + 1):.2f},{sy(v):.2f}"
                          for e, v in enumerate(series))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{points}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_curve_charts(run_dir: Path, histories: list[RunHistory]) -> list[Path]:
    loss_path = run_dir / LOSS_SVG_NAME
    acc_path = run_dir / ACC_SVG_NAME
    loss_path.write_text(render_curves_svg(
        [h.val_loss for h in histories], "Validation loss per fold", "loss"))
    acc_path.write_text(render_curves_svg(
        [h.val_acc for h in histories], "Validation accuracy per fold", "accuracy"))
    return [loss_path, acc_path]
