"""Synthetic 28x28 digit glyphs (0 and 7) and IDX file emission.

Stands in for the real MNIST files in hermetic environments: rings for
'0', bar-plus-diagonal strokes for '7', with seeded jitter in position,
size, stroke width, and intensity.  Written through the same IDX format
the loader parses, so the whole ingest path is exercised unchanged.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_YY, _XX = np.mgrid[0:28, 0:28]


def _draw_zero(rng: np.random.Generator) -> np.ndarray:
    cy = 13.5 + rng.uniform(-1.5, 1.5)
    cx = 13.5 + rng.uniform(-1.5, 1.5)
    ry = rng.uniform(7.5, 10.0)
    rx = rng.uniform(5.0, 7.5)
    width = rng.uniform(0.28, 0.45)
    r2 = ((_YY - cy) / ry) ** 2 + ((_XX - cx) / rx) ** 2
    ring = np.abs(np.sqrt(r2) - 1.0) < width
    img = np.zeros((28, 28))
    img[ring] = rng.uniform(0.7, 1.0)
    return img


def _draw_seven(rng: np.random.Generator) -> np.ndarray:
    img = np.zeros((28, 28))
    top = int(rng.integers(4, 7))
    left = int(rng.integers(5, 8))
    right = int(rng.integers(20, 24))
    bar_th = int(rng.integers(2, 4))
    img[top : top + bar_th, left:right] = rng.uniform(0.7, 1.0)
    # diagonal stroke from the bar's right end down-left
    bottom = int(rng.integers(24, 27))
    foot = left + int(rng.integers(2, 6))
    stroke_th = rng.uniform(1.2, 2.0)
    y0, x0 = top + bar_th - 1, right - 1
    y1, x1 = bottom, foot
    # distance from each pixel to the stroke segment
    dy, dx = y1 - y0, x1 - x0
    t = ((_YY - y0) * dy + (_XX - x0) * dx) / (dy**2 + dx**2)
    t = np.clip(t, 0.0, 1.0)
    dist = np.hypot(_YY - (y0 + t * dy), _XX - (x0 + t * dx))
    img[dist < stroke_th] = rng.uniform(0.7, 1.0)
    return img


def generate_digits(num_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(images uint8 (2N,28,28), labels uint8 in {0,7}), interleaved."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(num_per_class):
        for digit, draw in ((0, _draw_zero), (7, _draw_seven)):
            img = draw(rng)
            img += rng.uniform(0.0, 0.04, size=img.shape)  # background speckle
            images.append(np.clip(img * 255, 0, 255).astype(np.uint8))
            labels.append(digit)
    return np.stack(images), np.array(labels, dtype=np.uint8)


def write_idx_files(
    out_dir: str | Path,
    images: np.ndarray,
    labels: np.ndarray,
    prefix: str = "train",
) -> tuple[Path, Path]:
    """Emit big-endian IDX image/label files with standard MNIST names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path = out_dir / f"{prefix}-images-idx3-ubyte"
    lab_path = out_dir / f"{prefix}-labels-idx1-ubyte"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())
    return img_path, lab_path


def make_synthetic_dir(out_dir: str | Path, num_per_class: int = 700, seed: int = 12345) -> Path:
    """Write a ready-to-load dataset directory of synthetic 0/7 glyphs."""
    images, labels = generate_digits(num_per_class, seed)
    write_idx_files(out_dir, images, labels, prefix="train")
    return Path(out_dir)
