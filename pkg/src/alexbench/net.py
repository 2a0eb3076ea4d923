"""Softmax image classifier: forward pass, backprop, Adam training.

Parameters live in one flat float64 vector so the optimizer, checkpoint
format, and finite-difference checks all see the same object. Two
architectures are supported:

  dense: flatten -> dense(hidden, relu) -> dense(n_classes) -> softmax
  conv:  conv(kernel x kernel, filters, valid, stride 1, relu) -> flatten
         -> dense(hidden, relu) -> dense(n_classes) -> softmax
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    DimensionMismatchError,
    EmptyBatchError,
    EmptyPoolError,
    UnsupportedArchitectureError,
)

ARCH_KINDS = ("dense", "conv")


@dataclass(frozen=True)
class Architecture:
    """Shape descriptor plus forward/backward passes over a flat parameter vector."""

    kind: str
    image_shape: tuple[int, int] = (28, 28)
    n_classes: int = 10
    hidden: int = 128
    conv_filters: int = 32
    kernel: int = 3

    def __post_init__(self):
        if self.kind not in ARCH_KINDS:
            raise UnsupportedArchitectureError(f"unknown architecture {self.kind!r}")
        if self.kind == "conv":
            r, c = self.image_shape
            if r < self.kernel or c < self.kernel:
                raise UnsupportedArchitectureError(
                    f"{r}x{c} image too small for {self.kernel}x{self.kernel} kernel"
                )

    @property
    def n_features(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    @property
    def conv_output_size(self) -> int:
        r, c = self.image_shape
        return (r - self.kernel + 1) * (c - self.kernel + 1) * self.conv_filters

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (name, shape) pairs defining the flat parameter layout."""
        shapes = []
        if self.kind == "conv":
            shapes.append(("conv_w", (self.kernel * self.kernel, self.conv_filters)))
            shapes.append(("conv_b", (self.conv_filters,)))
            first_in = self.conv_output_size
        else:
            first_in = self.n_features
        shapes.append(("hidden_w", (first_in, self.hidden)))
        shapes.append(("hidden_b", (self.hidden,)))
        shapes.append(("out_w", (self.hidden, self.n_classes)))
        shapes.append(("out_b", (self.n_classes,)))
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layer_shapes())

    def unpack(self, params: np.ndarray) -> dict[str, np.ndarray]:
        """Views into the flat vector, one per layer tensor."""
        if params.shape != (self.n_params,):
            raise DimensionMismatchError(
                f"expected {self.n_params} parameters, got {params.shape}"
            )
        out = {}
        offset = 0
        for name, shape in self.layer_shapes():
            size = int(np.prod(shape))
            out[name] = params[offset : offset + size].reshape(shape)
            offset += size
        return out

    def init_params(self, seed: int) -> np.ndarray:
        """Scaled-uniform fan-in init for interior layers; final layer all zero."""
        rng = np.random.default_rng(seed)
        params = np.zeros(self.n_params)
        layers = self.unpack(params)
        for name, w in layers.items():
            if name.startswith("out_") or name.endswith("_b"):
                continue  # biases and the final layer stay zero
            fan_in = w.shape[0]
            limit = np.sqrt(6.0 / fan_in)
            w[...] = rng.uniform(-limit, limit, size=w.shape)
        return params

    def _im2col(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        imgs = X.reshape(n, *self.image_shape)
        windows = np.lib.stride_tricks.sliding_window_view(
            imgs, (self.kernel, self.kernel), axis=(1, 2)
        )
        return windows.reshape(n, -1, self.kernel * self.kernel)

    def forward(self, params: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, dict]:
        """Logits plus the activation cache needed by backward()."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                f"expected (n, {self.n_features}) input, got {X.shape}"
            )
        layers = self.unpack(params)
        cache: dict = {}
        if self.kind == "conv":
            patches = self._im2col(X)
            z_conv = patches @ layers["conv_w"] + layers["conv_b"]
            a_conv = np.maximum(z_conv, 0.0)
            a0 = a_conv.reshape(X.shape[0], -1)
            cache.update(patches=patches, z_conv=z_conv)
        else:
            a0 = X
        z1 = a0 @ layers["hidden_w"] + layers["hidden_b"]
        a1 = np.maximum(z1, 0.0)
        logits = a1 @ layers["out_w"] + layers["out_b"]
        cache.update(a0=a0, z1=z1, a1=a1)
        return logits, cache

    def loss_and_grad(
        self, params: np.ndarray, X: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        """Mean cross-entropy and its gradient w.r.t. the flat parameter vector."""
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise EmptyBatchError("cannot evaluate loss on an empty batch")
        logits, cache = self.forward(params, X)
        n = len(y)

        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(log_z - shifted[np.arange(n), y]))

        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        dlogits = probs
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n

        grad = np.zeros_like(params)
        layers = self.unpack(params)
        g = self.unpack(grad)

        g["out_w"][...] = cache["a1"].T @ dlogits
        g["out_b"][...] = dlogits.sum(axis=0)
        da1 = dlogits @ layers["out_w"].T
        dz1 = da1 * (cache["z1"] > 0)
        g["hidden_w"][...] = cache["a0"].T @ dz1
        g["hidden_b"][...] = dz1.sum(axis=0)
        if self.kind == "conv":
            da0 = dz1 @ layers["hidden_w"].T
            dz_conv = da0.reshape(cache["z_conv"].shape) * (cache["z_conv"] > 0)
            g["conv_w"][...] = np.einsum("npk,npf->kf", cache["patches"], dz_conv)
            g["conv_b"][...] = dz_conv.sum(axis=(0, 1))
        return loss, grad

    def predict_proba(
        self, params: np.ndarray, X: np.ndarray, chunk: int = 1024
    ) -> np.ndarray:
        """Posterior matrix (n, n_classes); rows sum to 1."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        out = np.empty((X.shape[0], self.n_classes))
        for start in range(0, X.shape[0], chunk):
            logits, _ = self.forward(params, X[start : start + chunk])
            out[start : start + chunk] = softmax(logits)
        return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def uncertainty_score(p: np.ndarray) -> np.ndarray:
    """Max posterior entry; lower means more uncertain. Works on rows or a matrix."""
    return np.asarray(p).max(axis=-1)


def margin_score(p: np.ndarray) -> np.ndarray:
    """Top-1 minus top-2 posterior; lower means closer to the decision boundary."""
    p = np.asarray(p)
    top2 = np.partition(p, -2, axis=-1)[..., -2:]
    return top2[..., 1] - top2[..., 0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def train_params(
    arch: Architecture,
    params: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    shuffle_rng: np.random.Generator,
) -> np.ndarray:
    """Adam on mean cross-entropy; deterministic given params and the rng."""
    if len(y) == 0:
        raise EmptyPoolError("cannot train on an empty pool")
    params = params.copy()
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    t = 0
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = arch.loss_and_grad(params, X[batch], y[batch])
            t += 1
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
            m_hat = m / (1.0 - cfg.beta1**t)
            v_hat = v / (1.0 - cfg.beta2**t)
            params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params


class SoftmaxNetClassifier(BaseEstimator, ClassifierMixin):
    """Multinomial image classifier retrained from scratch on every fit.

    Both training and initialization are fully seeded, so identical
    (init_seed, shuffle_seed, data) produce bitwise-identical parameters.

    Parameters
    ----------
    arch : "dense" or "conv"
    image_shape : input image dimensions; features arrive flattened
    n_classes : fixed label alphabet 0..n_classes-1 (classes absent from a
        small training pool still get a posterior column)
    epochs, batch_size, learning_rate, beta1, beta2, epsilon : Adam settings
    init_seed, shuffle_seed : rng seeds for weight init and batch order
    """

    def __init__(
        self,
        arch: str = "dense",
        image_shape: tuple[int, int] = (28, 28),
        n_classes: int = 10,
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        init_seed: int = 0,
        shuffle_seed: int = 0,
    ):
        self.arch = arch
        self.image_shape = image_shape
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.init_seed = init_seed
        self.shuffle_seed = shuffle_seed

    def _architecture(self) -> Architecture:
        return Architecture(
            kind=self.arch,
            image_shape=tuple(self.image_shape),
            n_classes=self.n_classes,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise EmptyPoolError("cannot fit on an empty pool")
        arch = self._architecture()
        if X.shape[1] != arch.n_features:
            raise DimensionMismatchError(
                f"expected {arch.n_features} features, got {X.shape[1]}"
            )
        self.architecture_ = arch
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = arch.n_features
        params0 = arch.init_params(self.init_seed)
        self.params_ = train_params(
            arch, params0, X, y, self._train_config(),
            np.random.default_rng(self.shuffle_seed),
        )
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return self.architecture_.predict_proba(self.params_, X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def training_loss(self, X, y) -> float:
        check_is_fitted(self, "params_")
        loss, _ = self.architecture_.loss_and_grad(self.params_, X, y)
        return loss


def save_model_blob(path: str | Path, clf: SoftmaxNetClassifier) -> None:
    """Descriptor line + little-endian float32 parameter blob."""
    check_is_fitted(clf, "params_")
    a = clf.architecture_
    header = (
        f"{a.kind} {a.image_shape[0]} {a.image_shape[1]} {a.n_classes} "
        f"{a.hidden} {a.conv_filters} {a.kernel}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(clf.params_.astype("<f4").tobytes())


def load_model_blob(path: str | Path) -> SoftmaxNetClassifier:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        blob = fh.read()
    kind = header[0]
    rows, cols, n_classes, hidden, filters, kernel = (int(v) for v in header[1:])
    arch = Architecture(
        kind=kind,
        image_shape=(rows, cols),
        n_classes=n_classes,
        hidden=hidden,
        conv_filters=filters,
        kernel=kernel,
    )
    params = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    if params.shape != (arch.n_params,):
        raise DimensionMismatchError(
            f"blob holds {params.size} values, architecture needs {arch.n_params}"
        )
    clf = SoftmaxNetClassifier(arch=kind, image_shape=(rows, cols), n_classes=n_classes)
    clf.architecture_ = arch
    clf.classes_ = np.arange(n_classes)
    clf.n_features_in_ = arch.n_features
    clf.params_ = params
    return clf
