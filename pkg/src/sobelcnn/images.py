"""Image ingestion, preprocessing, augmentation, and the sample cache.

Grayscale images are plain 2-d numpy arrays: uint8 straight off disk, float32
afterwards, with values in [0, 255] until normalize() maps them to [0, 1].

Dataset directory layout: <root>/covid/*.{png,jpg,jpeg} and
<root>/normal/*.{png,jpg,jpeg}. Prepared samples can be cached one file per
sample in the IMG1 binary format (see save_sample).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImageError,
    DataError,
    EmptyClassError,
    MissingFileError,
    ShapeError,
    UnsupportedFormatError,
)

LABEL_NEGATIVE = 0  # normal
LABEL_POSITIVE = 1  # covid
LABEL_NAMES = {LABEL_NEGATIVE: "normal", LABEL_POSITIVE: "covid"}
CLASS_DIRS = (("covid", LABEL_POSITIVE), ("normal", LABEL_NEGATIVE))

LINEAGES = ("original", "shift_x", "shift_y", "rotation")
LINEAGE_CODES = {name: i for i, name in enumerate(LINEAGES)}

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

# ITU-R BT.601 luma weights for RGB -> grayscale
_BT601 = np.array([0.299, 0.587, 0.114])


@dataclass
class LabeledSample:
    """One preprocessed image with its label and provenance."""

    image: np.ndarray          # (S, S) float32, values in [0, 255]
    label: int                 # LABEL_POSITIVE or LABEL_NEGATIVE
    source_id: str             # originating file, relative to the dataset root
    lineage: str = "original"  # one of LINEAGES


@dataclass
class LabeledDataset:
    samples: list[LabeledSample]
    seed: int
    augmented: bool = False

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in LABEL_NAMES.values()}
        for s in self.samples:
            counts[LABEL_NAMES[s.label]] += 1
        return counts

    @property
    def side(self) -> int:
        return self.samples[0].image.shape[0] if self.samples else 0

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or JPEG file to 2-d uint8 luminance.

    8-bit grayscale files pass through bit-identically; color inputs are
    converted with BT.601 weights (0.299/0.587/0.114), rounded half-up.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"image file not found: {path}")
    try:
        with Image.open(path) as img:
            fmt = img.format
            if fmt not in ("PNG", "JPEG"):
                raise UnsupportedFormatError(
                    f"unsupported image format {fmt!r} (PNG/JPEG only): {path}")
            img.load()
            if img.mode == "L":
                return np.asarray(img, dtype=np.uint8)
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise CorruptImageError(f"cannot decode image stream: {path}") from exc
    except OSError as exc:
        raise CorruptImageError(f"truncated or corrupt image: {path}") from exc
    luma = np.floor(rgb @ _BT601 + 0.5)
    return np.clip(luma, 0, 255).astype(np.uint8)


def _bilinear_sample(image: np.ndarray, rows: np.ndarray,
                     cols: np.ndarray) -> np.ndarray:
    """Sample at fractional (row, col) positions; borders replicate the edge."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bottom = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr


def resize_bilinear(image: np.ndarray, target_side: int) -> np.ndarray:
    """Bilinear resize to target_side x target_side.

    Uses the half-pixel-center convention: output pixel d samples source
    coordinate (d + 0.5) * (in / out) - 0.5, clamped to the image.
    """
    if target_side < 2:
        raise ShapeError(f"target side must be >= 2, got {target_side}")
    image = np.asarray(image)
    if image.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got ndim={image.ndim}")
    h, w = image.shape
    d = np.arange(target_side)
    rows = (d + 0.5) * (h / target_side) - 0.5
    cols = (d + 0.5) * (w / target_side) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _bilinear_sample(image, rr, cc).astype(np.float32)


_SOBEL_GX = np.array([[-1.0, 0.0, 1.0],
                      [-2.0, 0.0, 2.0],
                      [-1.0, 0.0, 1.0]])
_SOBEL_GY = _SOBEL_GX.T


def sobel_magnitude(image: np.ndarray) -> np.ndarray:
    """Raw (unscaled) Sobel gradient magnitude, same size as the input.

    Correlation with the standard 3x3 pair, reflect (mirror) border padding.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 3 or image.shape[1] < 3:
        raise ShapeError(f"Sobel needs a 2-d image at least 3x3, got {image.shape}")
    padded = np.pad(image, 1, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    gx = np.einsum("ijuv,uv->ij", windows, _SOBEL_GX)
    gy = np.einsum("ijuv,uv->ij", windows, _SOBEL_GY)
    return np.sqrt(gx * gx + gy * gy)


def sobel(image: np.ndarray) -> np.ndarray:
    """Sobel edge map rescaled to [0, 255] by its own maximum.

    A constant image (zero magnitude everywhere) maps to all zeros.
    """
    mag = sobel_magnitude(image)
    peak = mag.max()
    if peak > 0:
        mag = mag * (255.0 / peak)
    return mag.astype(np.float32)


def _shift(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) pixels (dx: columns, dy: rows), replicating the
    nearest edge into vacated regions."""
    img = np.asarray(image)
    h, w = img.shape
    src_r = np.clip(np.arange(h) - dy, 0, h - 1)
    src_c = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[src_r[:, None], src_c[None, :]]


def _rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image center, bilinear resampling,
    edge replication outside the frame."""
    img = np.asarray(image)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = np.deg2rad(degrees)
    cos, sin = np.cos(rad), np.sin(rad)
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    y = rr - cy
    x = cc - cx
    src_r = cos * y + sin * x + cy
    src_c = -sin * y + cos * x + cx
    return _bilinear_sample(img, src_r, src_c)


def augment(image: np.ndarray, seed: int
            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Produce the three augmented variants (shift_x, shift_y, rotation).

    Shifts are integer pixel offsets drawn uniformly from +-10% of the
    matching dimension; the rotation angle is uniform in +-15 degrees.
    Deterministic in (image, seed).
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got ndim={img.ndim}")
    h, w = img.shape
    rng = np.random.default_rng(seed)
    max_dx = int(round(0.10 * w))
    max_dy = int(round(0.10 * h))
    dx = int(rng.integers(-max_dx, max_dx + 1)) if max_dx else 0
    dy = int(rng.integers(-max_dy, max_dy + 1)) if max_dy else 0
    angle = float(rng.uniform(-15.0, 15.0))
    shift_x = _shift(img, dx, 0).astype(np.float32)
    shift_y = _shift(img, 0, dy).astype(np.float32)
    rotation = _rotate(img, angle).astype(np.float32)
    return shift_x, shift_y, rotation


def normalize(image: np.ndarray) -> np.ndarray:
    """Map [0, 255] pixel values to [0, 1] and add the channel axis -> (1, S, S)."""
    img = np.asarray(image, dtype=np.float32) / 255.0
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got ndim={img.ndim}")
    return img[None, :, :]


def _augment_seed(seed: int, index: int) -> int:
    # stable per-file stream regardless of how many files precede it
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def prepare_dataset(input_dir: str | Path, seed: int, augment_data: bool = True,
                    target_side: int = 64) -> LabeledDataset:
    """Load, optionally augment (x4), and resize every image under input_dir.

    Augmented variants are generated from the raw image before resizing, so
    shift/rotation magnitudes are relative to the source resolution. Sobel
    filtering and normalization happen later, per experiment arm. Samples are
    emitted in sorted path order; the whole result is deterministic in
    (directory contents, seed).
    """
    root = Path(input_dir)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    listing: list[tuple[Path, int]] = []
    for dir_name, label in CLASS_DIRS:
        class_dir = root / dir_name
        if not class_dir.is_dir():
            raise DataError(f"missing class directory: {class_dir}")
        files = sorted(p for p in class_dir.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise EmptyClassError(f"no images in class directory: {class_dir}")
        listing.extend((p, label) for p in files)

    samples: list[LabeledSample] = []
    for index, (path, label) in enumerate(listing):
        raw = load_image(path)
        source_id = path.relative_to(root).as_posix()
        variants: list[tuple[str, np.ndarray]] = [("original", raw)]
        if augment_data:
            sx, sy, rot = augment(raw, _augment_seed(seed, index))
            variants += [("shift_x", sx), ("shift_y", sy), ("rotation", rot)]
        for lineage, img in variants:
            samples.append(LabeledSample(
                image=resize_bilinear(img, target_side),
                label=label,
                source_id=source_id,
                lineage=lineage,
            ))
    return LabeledDataset(samples=samples, seed=seed, augmented=augment_data)


# ---------------------------------------------------------------------------
# Sample cache: IMG1 binary format, one file per sample, plus a JSON manifest.
#
# IMG1 layout: magic b"IMG1", u16 LE side, u8 label, u8 lineage code, then
# side*side little-endian float32 pixel values (row-major, range [0, 255]).
# ---------------------------------------------------------------------------

_IMG1_MAGIC = b"IMG1"
_IMG1_HEADER = struct.Struct("<4sHBB")
MANIFEST_NAME = "manifest.json"


def save_sample(sample: LabeledSample, path: str | Path) -> None:
    img = np.ascontiguousarray(sample.image, dtype="<f4")
    side = img.shape[0]
    if img.shape != (side, side):
        raise ShapeError(f"cached samples must be square, got {img.shape}")
    header = _IMG1_HEADER.pack(_IMG1_MAGIC, side, sample.label,
                               LINEAGE_CODES[sample.lineage])
    Path(path).write_bytes(header + img.tobytes())


def load_sample(path: str | Path, source_id: str = "") -> LabeledSample:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"cached sample not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _IMG1_HEADER.size:
        raise DataError(f"truncated sample file: {path}")
    magic, side, label, lineage_code = _IMG1_HEADER.unpack_from(blob)
    if magic != _IMG1_MAGIC:
        raise DataError(f"bad magic in sample file: {path}")
    expected = _IMG1_HEADER.size + side * side * 4
    if len(blob) != expected:
        raise DataError(
            f"sample file {path}: expected {expected} bytes, got {len(blob)}")
    if lineage_code >= len(LINEAGES) or label not in LABEL_NAMES:
        raise DataError(f"sample file {path}: invalid label/lineage byte")
    pixels = np.frombuffer(blob, dtype="<f4", offset=_IMG1_HEADER.size)
    image = pixels.reshape(side, side).astype(np.float32)
    return LabeledSample(image=image, label=int(label),
                         source_id=source_id or path.stem,
                         lineage=LINEAGES[lineage_code])


def save_prepared(dataset: LabeledDataset, out_dir: str | Path) -> dict:
    """Write one IMG1 file per sample plus manifest.json; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    counts: dict[str, dict[str, int]] = {
        name: {lin: 0 for lin in LINEAGES} for name in LABEL_NAMES.values()}
    for i, sample in enumerate(dataset.samples):
        file_name = f"sample_{i:05d}.img1"
        save_sample(sample, out / file_name)
        counts[LABEL_NAMES[sample.label]][sample.lineage] += 1
        entries.append({
            "file": file_name,
            "source": sample.source_id,
            "label": LABEL_NAMES[sample.label],
            "lineage": sample.lineage,
        })
    manifest = {
        "format": "IMG1",
        "side": dataset.side,
        "seed": dataset.seed,
        "augmented": dataset.augmented,
        "counts": counts,
        "total": len(dataset.samples),
        "samples": entries,
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def load_prepared(data_dir: str | Path) -> LabeledDataset:
    """Load a cached dataset written by save_prepared."""
    root = Path(data_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"no {MANIFEST_NAME} in {root}; run prepare first")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"unreadable manifest: {manifest_path}") from exc
    samples = []
    for entry in manifest["samples"]:
        sample = load_sample(root / entry["file"], source_id=entry["source"])
        if LABEL_NAMES[sample.label] != entry["label"] or \
                sample.lineage != entry["lineage"]:
            raise DataError(
                f"manifest disagrees with sample file {entry['file']}")
        samples.append(sample)
    if not samples:
        raise DataError(f"prepared dataset in {root} is empty")
    side = samples[0].image.shape[0]
    if any(s.image.shape != (side, side) for s in samples):
        raise DataError(f"prepared dataset in {root} mixes image sizes")
    return LabeledDataset(samples=samples, seed=int(manifest["seed"]),
                          augmented=bool(manifest["augmented"]))
