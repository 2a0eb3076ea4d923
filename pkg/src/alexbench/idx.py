"""IDX container parsing and writing.

Byte layout (big endian):
  images: u32 magic 0x00000803 | u32 n | u32 rows | u32 cols | n*rows*cols pixel bytes
  labels: u32 magic 0x00000801 | u32 n | n label bytes

Files may be gzip-wrapped; the wrapper is detected by the 0x1F8B prefix.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    LabelOutOfRangeError,
    TruncatedError,
)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MAX_DIM = 10**8
GZIP_PREFIX = b"\x1f\x8b"


def parse_idx_images(data: bytes) -> np.ndarray:
    """Parse an IDX image file into a uint8 tensor of shape (n, rows, cols)."""
    if len(data) < 4:
        raise TruncatedError(f"image file too short for magic: {len(data)} bytes")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != IMAGE_MAGIC:
        raise BadMagicError(f"expected image magic {IMAGE_MAGIC:#010x}, got {magic:#010x}")
    if len(data) < 16:
        raise TruncatedError(f"image file too short for header: {len(data)} bytes")
    n, rows, cols = struct.unpack(">III", data[4:16])
    for dim in (n, rows, cols):
        if dim > MAX_DIM:
            raise DimensionOverflowError(f"dimension {dim} exceeds {MAX_DIM}")
    expected = 16 + n * rows * cols
    if len(data) != expected:
        raise TruncatedError(f"expected {expected} bytes for {n}x{rows}x{cols}, got {len(data)}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows, cols)


def parse_idx_labels(data: bytes, n_classes: int = 10) -> np.ndarray:
    """Parse an IDX label file into a uint8 vector; every entry must be < n_classes."""
    if len(data) < 4:
        raise TruncatedError(f"label file too short for magic: {len(data)} bytes")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != LABEL_MAGIC:
        raise BadMagicError(f"expected label magic {LABEL_MAGIC:#010x}, got {magic:#010x}")
    if len(data) < 8:
        raise TruncatedError(f"label file too short for header: {len(data)} bytes")
    (n,) = struct.unpack(">I", data[4:8])
    if n > MAX_DIM:
        raise DimensionOverflowError(f"count {n} exceeds {MAX_DIM}")
    if len(data) != 8 + n:
        raise TruncatedError(f"expected {8 + n} bytes for {n} labels, got {len(data)}")
    labels = np.frombuffer(data, dtype=np.uint8, offset=8)
    if n and labels.max() >= n_classes:
        raise LabelOutOfRangeError(f"label {labels.max()} >= {n_classes}")
    return labels.copy()


def write_idx_images(images: np.ndarray) -> bytes:
    """Serialize a (n, rows, cols) uint8 tensor to IDX image bytes."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    return struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes()


def write_idx_labels(labels: np.ndarray) -> bytes:
    """Serialize a label vector to IDX label bytes."""
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, len(labels)) + labels.tobytes()


def read_idx_file(path: str | Path) -> bytes:
    """Read raw IDX bytes from a plain or gzip-wrapped file."""
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_PREFIX:
        return gzip.decompress(raw)
    return raw


# Canonical file names shared by the MNIST and FMNIST distributions; each
# dataset lives in its own subdirectory of the data dir.
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATASET_URLS = {
    "mnist": "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "fmnist": "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
}


def locate_split(data_dir: str | Path, dataset: str, split: str) -> tuple[Path, Path]:
    """Resolve the image/label files for a dataset split, preferring .gz."""
    base = Path(data_dir) / dataset
    image_name, label_name = SPLIT_FILES[split]
    paths = []
    for name in (image_name, label_name):
        gz = base / (name + ".gz")
        plain = base / name
        if gz.exists():
            paths.append(gz)
        elif plain.exists():
            paths.append(plain)
        else:
            raise FileNotFoundError(f"missing {name}[.gz] under {base}")
    return paths[0], paths[1]


def fetch_dataset(data_dir: str | Path, dataset: str, reporthook=None) -> list[Path]:
    """Download the four gzip IDX files for a dataset into data_dir/<dataset>/."""
    import urllib.request

    if dataset not in DATASET_URLS:
        raise ValueError(f"unknown dataset {dataset!r}")
    base = Path(data_dir) / dataset
    base.mkdir(parents=True, exist_ok=True)
    written = []
    for split in ("train", "test"):
        for name in SPLIT_FILES[split]:
            target = base / (name + ".gz")
            if target.exists():
                written.append(target)
                continue
            url = DATASET_URLS[dataset] + name + ".gz"
            with urllib.request.urlopen(url) as resp:
                payload = resp.read()
            target.write_bytes(payload)
            if reporthook is not None:
                reporthook(url, target)
            written.append(target)
    return written
