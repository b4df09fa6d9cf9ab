"""MNIST-style IDX loading, binary-pair filtering, and seeded splits.

Images are 28x28 uint8 grids flattened row-major, zero-padded to 2^n and
normalized into amplitude vectors.  Dataset files are never downloaded;
callers point at a directory (CLI flag or QCNN_MNIST_DIR).
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import EncodedSample, amplitude_encode

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

CACHE_MAGIC = b"QCNNDS1\x00"  # 16-byte header: magic + u32 count + u32 dim

ENV_DATA_DIR = "QCNN_MNIST_DIR"


class IdxFormatError(ValueError):
    """Base for IDX container problems."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass
class RawDataset:
    images: np.ndarray  # (N, 28, 28) uint8
    labels: np.ndarray  # (N,) uint8


@dataclass
class BinaryDataset:
    samples: list[EncodedSample]
    class_pair: tuple[int, int]
    split_seed: int


def _read_exact(f, count: int, what: str) -> bytes:
    buf = f.read(count)
    if len(buf) != count:
        raise IdxTruncatedError(f"{what}: expected {count} bytes, got {len(buf)}")
    return buf


def load_idx(images_path: str | Path, labels_path: str | Path) -> RawDataset:
    """Parse big-endian IDX image/label files and cross-check their counts."""
    with open(images_path, "rb") as f:
        magic, count, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, "image header"))
        if magic != IMAGES_MAGIC:
            raise IdxMagicError(f"bad image magic 0x{magic:08x}")
        if (rows, cols) != (28, 28):
            raise IdxFormatError(f"expected 28x28 images, got {rows}x{cols}")
        raw = _read_exact(f, count * rows * cols, "image payload")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">ii", _read_exact(f, 8, "label header"))
        if magic != LABELS_MAGIC:
            raise IdxMagicError(f"bad label magic 0x{magic:08x}")
        raw = _read_exact(f, lcount, "label payload")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if count != lcount:
        raise IdxCountMismatchError(f"{count} images but {lcount} labels")
    return RawDataset(images, labels)


def resolve_data_dir(flag_value: str | None) -> Path:
    """CLI flag wins; fall back to the QCNN_MNIST_DIR environment variable."""
    if flag_value:
        return Path(flag_value)
    env = os.environ.get(ENV_DATA_DIR)
    if env:
        return Path(env)
    raise FileNotFoundError(
        f"no dataset directory: pass --data or set {ENV_DATA_DIR}"
    )


def make_binary(raw: RawDataset, a: int, b: int, n: int, seed: int) -> BinaryDataset:
    """Filter to digits a/b, map to labels 0/1, encode, seeded shuffle."""
    if a == b:
        raise ValueError("class digits must differ")
    mask = (raw.labels == a) | (raw.labels == b)
    if not np.any(raw.labels == a) or not np.any(raw.labels == b):
        raise ValueError(f"dataset has no samples for pair ({a}, {b})")
    images = raw.images[mask]
    labels = (raw.labels[mask] == b).astype(int)
    order = np.random.default_rng(seed).permutation(len(labels))
    samples = []
    for i in order:
        enc = amplitude_encode(images[i].astype(np.float64).ravel(), n)
        enc.label = int(labels[i])
        samples.append(enc)
    return BinaryDataset(samples, (a, b), seed)


def split(
    ds: BinaryDataset, fractions: tuple[float, float, float]
) -> tuple[BinaryDataset, BinaryDataset, BinaryDataset]:
    """Stratified, disjoint, covering partition into train/val/test."""
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be positive and sum to 1")
    by_class = {0: [], 1: []}
    for i, s in enumerate(ds.samples):
        by_class[s.label].append(i)

    parts: list[list[int]] = [[], [], []]
    for idxs in by_class.values():
        n = len(idxs)
        counts = [int(np.floor(f * n)) for f in fractions]
        rema = [f * n - c for f, c in zip(fractions, counts)]
        while sum(counts) < n:
            j = int(np.argmax(rema))
            counts[j] += 1
            rema[j] = -1.0
        pos = 0
        for j, c in enumerate(counts):
            parts[j].extend(idxs[pos : pos + c])
            pos += c

    out = []
    for idxs in parts:
        idxs.sort()
        out.append(BinaryDataset([ds.samples[i] for i in idxs], ds.class_pair, ds.split_seed))
    return tuple(out)


# ---------------------------------------------------------------------------
# preprocessed cache: 16-byte header, then per sample one little-endian
# float64 label followed by the float64 amplitude vector

def save_cache(path: str | Path, ds: BinaryDataset) -> None:
    dim = ds.samples[0].amplitudes.size
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<II", len(ds.samples), dim))
        for s in ds.samples:
            rec = np.empty(dim + 1, dtype="<f8")
            rec[0] = float(s.label)
            rec[1:] = s.amplitudes.real
            f.write(rec.tobytes())


def load_cache(path: str | Path, class_pair=(0, 7), split_seed: int = 0) -> BinaryDataset:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:8] != CACHE_MAGIC:
            raise IdxFormatError("bad cache header")
        count, dim = struct.unpack("<II", header[8:])
        samples = []
        for _ in range(count):
            rec = np.frombuffer(f.read(8 * (dim + 1)), dtype="<f8")
            if rec.size != dim + 1:
                raise IdxTruncatedError("cache payload truncated")
            samples.append(EncodedSample(rec[1:].astype(np.complex128), int(rec[0])))
    return BinaryDataset(samples, tuple(class_pair), split_seed)
