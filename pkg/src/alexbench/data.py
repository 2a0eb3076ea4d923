"""Datasets, normalized feature matrices, and the labeled/unlabeled pools."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import idx
from .errors import InsufficientClassCountError


@dataclass(frozen=True)
class RawDataset:
    """Immutable image/label collection for one split."""

    images: np.ndarray  # (n, rows, cols) uint8
    labels: np.ndarray  # (n,) int
    split: str
    n_classes: int = 10

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels"
            )
        if len(self.labels) and int(self.labels.max()) >= self.n_classes:
            raise ValueError(f"label {self.labels.max()} >= {self.n_classes}")
        self.images.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    @property
    def n_features(self) -> int:
        return self.images.shape[1] * self.images.shape[2]

    def feature_matrix(self) -> np.ndarray:
        """All instances as normalized rows in [0, 1], shape (n, rows*cols)."""
        return self.images.reshape(self.n, -1).astype(np.float64) / 255.0


def normalize(raw_pixels: np.ndarray) -> np.ndarray:
    """Scale u8 pixels to [0, 1]; 0 maps to exactly 0.0 and 255 to exactly 1.0."""
    return np.asarray(raw_pixels, dtype=np.float64) / 255.0


def load_dataset(data_dir: str | Path, dataset: str, split: str) -> RawDataset:
    image_path, label_path = idx.locate_split(data_dir, dataset, split)
    images = idx.parse_idx_images(idx.read_idx_file(image_path))
    labels = idx.parse_idx_labels(idx.read_idx_file(label_path))
    return RawDataset(images=images, labels=labels.astype(np.int64), split=split)


class LabeledPool:
    """Ordered set of (source_index, label) pairs; the S side of the partition."""

    def __init__(self, indices=(), labels=()):
        self.indices = np.asarray(indices, dtype=np.int64).copy()
        self.labels = np.asarray(labels, dtype=np.int64).copy()
        if self.indices.shape != self.labels.shape:
            raise ValueError("indices and labels must align")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("duplicate indices in labeled pool")

    def __len__(self):
        return len(self.indices)

    def extend(self, indices: np.ndarray, labels: np.ndarray) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        if np.isin(indices, self.indices).any():
            raise ValueError("index already labeled")
        self.indices = np.concatenate([self.indices, indices])
        self.labels = np.concatenate([self.labels, np.asarray(labels, dtype=np.int64)])

    def class_counts(self, n_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes)

    def copy(self) -> "LabeledPool":
        return LabeledPool(self.indices, self.labels)


class UnlabeledPool:
    """Ordered set of source indices; labels are never visible through this API."""

    def __init__(self, indices=()):
        self.indices = np.asarray(indices, dtype=np.int64).copy()
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("duplicate indices in unlabeled pool")

    def __len__(self):
        return len(self.indices)

    def remove(self, indices: np.ndarray) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        mask = np.isin(self.indices, indices)
        if mask.sum() != len(indices):
            raise ValueError("index not in unlabeled pool")
        self.indices = self.indices[~mask]

    def copy(self) -> "UnlabeledPool":
        return UnlabeledPool(self.indices)


@dataclass
class LabelOracle:
    """Simulated annotator: reveals ground-truth labels at annotation time."""

    labels: np.ndarray

    def reveal(self, indices: np.ndarray) -> np.ndarray:
        return self.labels[np.asarray(indices, dtype=np.int64)]


def stratified_seed(
    dataset: RawDataset,
    q: int,
    rng: np.random.Generator,
    universe: np.ndarray | None = None,
) -> tuple[LabeledPool, UnlabeledPool]:
    """Draw q instances per class into the seed pool; the rest become the unlabeled pool.

    `universe` restricts the draw to a subset of source indices (pool-limited runs);
    by default all indices of the split participate.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if universe is None:
        universe = np.arange(dataset.n, dtype=np.int64)
    else:
        universe = np.asarray(universe, dtype=np.int64)
    labels = dataset.labels[universe]

    chosen = []
    for cls in range(dataset.n_classes):
        members = universe[labels == cls]
        if len(members) < q:
            raise InsufficientClassCountError(
                f"class {cls} has {len(members)} instances, need {q}"
            )
        chosen.append(rng.choice(members, size=q, replace=False))
    seed_indices = np.concatenate(chosen)

    remaining = universe[~np.isin(universe, seed_indices)]
    labeled = LabeledPool(seed_indices, dataset.labels[seed_indices])
    return labeled, UnlabeledPool(remaining)
