"""Synthetic grayscale image generators for self-contained experiments.

Real chest X-rays cannot ship with the package, so the experiment demos and
the test-suite smoke checks run on generated images whose class signal lives
in fine edge structure:

  positive: a dense two-level pixel texture (a sharp transition at almost
            every pixel) riding on a smooth random background;
  negative: the same kind of smooth background with no fine texture.

Every image then gets a random per-image contrast gain and brightness offset,
uncorrelated with the class. Raw pixel statistics are therefore an unreliable
shortcut, while an edge-magnitude view normalized per image (which is exactly
what the Sobel arm computes) removes the gain/offset nuisance entirely.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .images import LabeledDataset, LabeledSample, resize_bilinear

TEXTURE_AMPLITUDE = 14.0
BACKGROUND_AMPLITUDE = 60.0
GAIN_RANGE = (0.35, 1.0)
OFFSET_RANGE = (90.0, 160.0)


def fine_texture(rng: np.random.Generator, side: int,
                 amplitude: float = TEXTURE_AMPLITUDE) -> np.ndarray:
    """Two-level +-amplitude texture with a sharp edge at almost every pixel."""
    cells = rng.random((side, side)) < 0.5
    return np.where(cells, amplitude, -amplitude)


def smooth_field(rng: np.random.Generator, side: int,
                 amplitude: float = BACKGROUND_AMPLITUDE) -> np.ndarray:
    """Low-frequency zero-centered field: coarse noise upsampled bilinearly."""
    coarse = rng.uniform(-amplitude, amplitude, (3, 3))
    return resize_bilinear(coarse, side).astype(np.float64)


def make_image(rng: np.random.Generator, side: int, positive: bool) -> np.ndarray:
    """One synthetic sample: smooth background (+ fine texture when positive),
    scaled by a random gain and shifted by a random brightness offset."""
    field = smooth_field(rng, side)
    if positive:
        field = field + fine_texture(rng, side)
    gain = rng.uniform(*GAIN_RANGE)
    offset = rng.uniform(*OFFSET_RANGE)
    return np.clip(offset + gain * field, 0.0, 255.0).astype(np.float32)


def make_dataset(n_positive: int, n_negative: int, side: int,
                 seed: int) -> LabeledDataset:
    """Build a LabeledDataset of synthetic originals (no augmentation)."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_positive):
        samples.append(LabeledSample(
            image=make_image(rng, side, True),
            label=1, source_id=f"synthetic/covid_{i:04d}", lineage="original"))
    for i in range(n_negative):
        samples.append(LabeledSample(
            image=make_image(rng, side, False),
            label=0, source_id=f"synthetic/normal_{i:04d}", lineage="original"))
    return LabeledDataset(samples=samples, seed=seed, augmented=False)


def write_image_dir(root: str | Path, n_covid: int, n_normal: int,
                    side: int, seed: int) -> Path:
    """Write a covid/ + normal/ PNG directory tree for the CLI entry points."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for dir_name, positive, count in (("covid", True, n_covid),
                                      ("normal", False, n_normal)):
        out = root / dir_name
        out.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            img = make_image(rng, side, positive)
            Image.fromarray(np.round(img).astype(np.uint8), mode="L").save(
                out / f"{dir_name}_{i:04d}.png")
    return root
