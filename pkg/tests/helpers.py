"""Shared fixtures-in-code: synthetic datasets and duck-typed model stubs."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from alexbench import idx
from alexbench.data import RawDataset


def make_block_dataset(
    n_per_class: int, seed: int, split: str = "train", hard: bool = False
) -> RawDataset:
    """10-class 28x28 images: a class-positioned bright block over noise.

    The hard variant adds a distractor block and more noise so small-seed
    runs show a real learning curve instead of saturating immediately.
    """
    rng = np.random.default_rng(seed)
    n_classes = 10
    n = n_per_class * n_classes
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    labels = np.repeat(np.arange(n_classes), n_per_class).astype(np.int64)
    for i, cls in enumerate(labels):
        if hard:
            img = rng.integers(0, 120, (28, 28))
            dr0, dc0 = rng.integers(0, 21, 2)
            img[dr0 : dr0 + 5, dc0 : dc0 + 5] = rng.integers(100, 200)
            r0 = (cls % 5) * 5 + 1 + rng.integers(-2, 3)
            c0 = (cls // 5) * 12 + 3 + rng.integers(-2, 3)
            img[max(0, r0) : max(0, r0) + 6, max(0, c0) : max(0, c0) + 7] = rng.integers(
                140, 255
            )
        else:
            img = rng.integers(0, 60, (28, 28))
            r0 = (cls % 3) * 9 + 1 + rng.integers(-1, 2)
            c0 = (cls // 3) * 7 + 1 + rng.integers(-1, 2)
            img[r0 : r0 + 8, c0 : c0 + 6] = rng.integers(170, 255)
        images[i] = img.astype(np.uint8)
    order = rng.permutation(n)
    return RawDataset(images=images[order], labels=labels[order], split=split)


def write_idx_tree(root: Path, dataset: str, train: RawDataset, test: RawDataset) -> Path:
    """Lay out train/test IDX files the way the loader expects them."""
    base = root / dataset
    base.mkdir(parents=True, exist_ok=True)
    (base / "train-images-idx3-ubyte").write_bytes(idx.write_idx_images(train.images))
    (base / "train-labels-idx1-ubyte").write_bytes(
        idx.write_idx_labels(train.labels.astype(np.uint8))
    )
    (base / "t10k-images-idx3-ubyte").write_bytes(idx.write_idx_images(test.images))
    (base / "t10k-labels-idx1-ubyte").write_bytes(
        idx.write_idx_labels(test.labels.astype(np.uint8))
    )
    return root


def real_data_dir() -> Path | None:
    """Directory holding real MNIST IDX files, if one is available."""
    candidates = []
    env = os.environ.get("ALEXBENCH_DATA_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path("data"))
    for root in candidates:
        try:
            idx.locate_split(root, "mnist", "train")
            idx.locate_split(root, "mnist", "test")
            return root
        except FileNotFoundError:
            continue
    return None


def make_linear_setup(seed, n_instances=10, patch=4, m=32, ridge=0.0):
    """Instances plus a model whose class-0 posterior is exactly linear in
    patch means, scaled so every instance predicts class 0."""
    from alexbench.explain import PatchGrid, PatchSurrogateExplainer

    rng = np.random.default_rng(seed)
    grid = PatchGrid((28, 28), (patch, patch))
    w = rng.uniform(0.5, 1.5, grid.n_patches)
    X = rng.uniform(0.45, 0.55, (n_instances, 784))
    w *= 0.75 / (grid.patch_means(X) @ w).mean()
    model = LinearPatchModel(w, grid)
    explainer = PatchSurrogateExplainer(
        model=model, m_samples=m, ridge=ridge, patch_size=patch, random_state=seed
    )
    return explainer, X, w, grid


def finite_difference_max_error(arch, params, X, y, coords, step=1e-4):
    """Worst relative disagreement between backprop and central differences."""
    _, grad = arch.loss_and_grad(params, X, y)
    worst = 0.0
    for c in coords:
        plus = params.copy()
        plus[c] += step
        minus = params.copy()
        minus[c] -= step
        lp, _ = arch.loss_and_grad(plus, X, y)
        lm, _ = arch.loss_and_grad(minus, X, y)
        numeric = (lp - lm) / (2 * step)
        denom = max(abs(numeric), abs(grad[c]), 1e-8)
        worst = max(worst, abs(numeric - grad[c]) / denom)
    return worst


def smooth_point(arch, seed):
    """Random parameters/inputs resampled until no relu input sits near its kink.

    Biases are shifted off zero so the rejection loop terminates quickly even
    for the conv stage's thousands of pre-activations.
    """
    rng = np.random.default_rng(seed)
    while True:
        params = rng.normal(0.0, 0.1, arch.n_params)
        layers = arch.unpack(params)
        layers["hidden_b"][...] += 0.5
        if "conv_b" in layers:
            layers["conv_b"][...] += 0.5
        X = rng.random((4, arch.n_features))
        y = rng.integers(0, arch.n_classes, 4)
        _, cache = arch.forward(params, X)
        pre = [np.abs(cache["z1"]).min()]
        if "z_conv" in cache:
            pre.append(np.abs(cache["z_conv"]).min())
        if min(pre) > 1e-3:
            return params, X, y


class TableModel:
    """predict_proba looked up by source index; features are index columns."""

    def __init__(self, probs: np.ndarray):
        self.probs = np.asarray(probs, dtype=np.float64)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X))
        return self.probs[X[:, 0].astype(int)]


class TableSurrogate:
    """explanation_distributions looked up the same way."""

    def __init__(self, dists: np.ndarray):
        self.dists = np.asarray(dists, dtype=np.float64)

    def explanation_distributions(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X))
        return self.dists[X[:, 0].astype(int)]


class LinearPatchModel:
    """Two-class model whose class-0 posterior is linear in patch means."""

    def __init__(self, w: np.ndarray, grid):
        self.w = np.asarray(w, dtype=np.float64)
        self.grid = grid

    def predict_proba(self, X) -> np.ndarray:
        t = self.grid.patch_means(np.atleast_2d(X)) @ self.w
        return np.column_stack([t, 1.0 - t])
