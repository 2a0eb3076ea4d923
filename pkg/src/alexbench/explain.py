"""Local linear surrogate over masked perturbations, and explanation divergences.

The surrogate approximates the classifier on a neighborhood of each labeled
instance: random binary masks u (one bit per patch) produce perturbed copies
z = x (.) expand(u), and per class l a ridge system is solved over the pooled
rows so that  weights[l] . patch_means(z)  tracks the posterior of class l on
z. Regression rows use patch-mean features, which for block-constant masks
equal  u * patch_means(x)  exactly.

An instance's explanation vector is  weights[predicted class] * patch_means(x)
(elementwise); divergence between explanations is KL after an abs+epsilon
normalization onto the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import (
    BadGridError,
    DimensionMismatchError,
    EmptyPoolError,
    SingularSystemError,
)
from .validation import check_positive_distribution


@dataclass(frozen=True)
class PatchGrid:
    """Tiling of an image into equal rectangular patches."""

    image_shape: tuple[int, int]
    patch_shape: tuple[int, int]

    def __post_init__(self):
        for img_dim, patch_dim in zip(self.image_shape, self.patch_shape):
            if patch_dim < 1 or img_dim % patch_dim != 0:
                raise BadGridError(
                    f"patch {self.patch_shape} does not tile image {self.image_shape}"
                )

    @property
    def patch_rows(self) -> int:
        return self.image_shape[0] // self.patch_shape[0]

    @property
    def patch_cols(self) -> int:
        return self.image_shape[1] // self.patch_shape[1]

    @property
    def n_patches(self) -> int:
        return self.patch_rows * self.patch_cols

    @property
    def n_pixels(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    def patch_means(self, X: np.ndarray) -> np.ndarray:
        """Mean pixel value per patch; accepts one flat vector or a row matrix."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_pixels:
            raise DimensionMismatchError(
                f"expected {self.n_pixels} pixels, got {X.shape[1]}"
            )
        n = X.shape[0]
        blocks = X.reshape(
            n, self.patch_rows, self.patch_shape[0], self.patch_cols, self.patch_shape[1]
        )
        means = blocks.mean(axis=(2, 4)).reshape(n, self.n_patches)
        return means[0] if single else means

    def expand_masks(self, bits: np.ndarray) -> np.ndarray:
        """Patch-level bit rows -> pixel-level mask rows (block replication)."""
        bits = np.asarray(bits, dtype=np.float64)
        single = bits.ndim == 1
        if single:
            bits = bits[None, :]
        if bits.shape[1] != self.n_patches:
            raise DimensionMismatchError(
                f"expected {self.n_patches} patch bits, got {bits.shape[1]}"
            )
        n = bits.shape[0]
        grid = bits.reshape(n, self.patch_rows, self.patch_cols)
        grid = np.repeat(grid, self.patch_shape[0], axis=1)
        grid = np.repeat(grid, self.patch_shape[1], axis=2)
        flat = grid.reshape(n, self.n_pixels)
        return flat[0] if single else flat


def sample_neighborhood(
    x: np.ndarray, m: int, grid: PatchGrid, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw m independent Bernoulli(1/2) patch masks and the masked copies of x.

    Returns (masks, Z): masks has shape (m, n_patches) with entries in {0, 1},
    Z[i] = x * expand(masks[i]).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (grid.n_pixels,):
        raise DimensionMismatchError(f"expected {grid.n_pixels} pixels, got {x.shape}")
    masks = rng.integers(0, 2, size=(m, grid.n_patches)).astype(np.float64)
    Z = x[None, :] * grid.expand_masks(masks)
    return masks, Z


def shapley_kernel_weights(mask_sizes: np.ndarray, n_patches: int) -> np.ndarray:
    """Kernel weight per mask cardinality s: (d-1) / (C(d,s) * s * (d-s)).

    The all-zero and all-one masks have infinite weight under the kernel; they
    are clamped to the s=1 value.
    """
    d = n_patches
    s = np.clip(np.asarray(mask_sizes, dtype=np.int64), 1, d - 1)
    log_binom = (
        math.lgamma(d + 1)
        - np.vectorize(math.lgamma)(s + 1.0)
        - np.vectorize(math.lgamma)(d - s + 1.0)
    )
    return (d - 1) * np.exp(-log_binom) / (s * (d - s))


class PatchSurrogateExplainer(BaseEstimator):
    """Per-class linear attribution weights fit on masked neighborhoods.

    Parameters
    ----------
    model : trained classifier exposing predict_proba(X) -> (n, c)
    m_samples : neighborhood size per labeled instance
    ridge : L2 penalty on the surrogate weights (0 solves plain least squares
        and raises SingularSystemError on a rank-deficient design)
    patch_size : square patch edge in pixels; 1 recovers per-pixel weights
    weighting : "uniform" or "shapley" sample weights
    epsilon : floor used when normalizing explanations to distributions
    random_state : seed for the mask draw; fit consumes a single block of
        shape (n_instances * m_samples, n_patches) from default_rng(seed)
    image_shape : image dimensions behind the flattened features

    Attributes
    ----------
    weights_ : (n_classes, n_patches) surrogate weight matrix
    grid_ : the PatchGrid used for masking and features
    """

    def __init__(
        self,
        model=None,
        m_samples: int = 64,
        ridge: float = 1e-3,
        patch_size: int = 2,
        weighting: str = "uniform",
        epsilon: float = 1e-8,
        random_state: int = 0,
        image_shape: tuple[int, int] = (28, 28),
    ):
        self.model = model
        self.m_samples = m_samples
        self.ridge = ridge
        self.patch_size = patch_size
        self.weighting = weighting
        self.epsilon = epsilon
        self.random_state = random_state
        self.image_shape = image_shape

    def _grid(self) -> PatchGrid:
        return PatchGrid(
            image_shape=tuple(self.image_shape),
            patch_shape=(self.patch_size, self.patch_size),
        )

    def fit(self, X, y=None):
        """Fit per-class weights on the pooled masked neighborhoods of X."""
        if self.model is None:
            raise ValueError("explainer needs a trained model")
        if self.weighting not in ("uniform", "shapley"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyPoolError("need a non-empty (n, d) matrix of labeled instances")
        grid = self._grid()
        if X.shape[1] != grid.n_pixels:
            raise DimensionMismatchError(
                f"expected {grid.n_pixels} pixels, got {X.shape[1]}"
            )
        n, m, dp = X.shape[0], self.m_samples, grid.n_patches

        parent_probs = np.asarray(self.model.predict_proba(X))
        n_classes = parent_probs.shape[1]
        parent_cls = parent_probs.argmax(axis=1)

        rng = np.random.default_rng(self.random_state)
        masks = rng.integers(0, 2, size=(n * m, dp)).astype(np.float64)
        if self.weighting == "shapley":
            sample_w = shapley_kernel_weights(masks.sum(axis=1), dp)
        else:
            sample_w = np.ones(n * m)

        parent_pm = grid.patch_means(X)

        gram = np.zeros((n_classes, dp, dp))
        moment = np.zeros((n_classes, dp))
        target_sq = np.zeros(n_classes)
        seen = np.zeros(n_classes, dtype=bool)

        # Chunked accumulation keeps the (rows x pixels) perturbation block small.
        chunk_parents = max(1, 4096 // m)
        for start in range(0, n, chunk_parents):
            stop = min(start + chunk_parents, n)
            block = slice(start * m, stop * m)
            mask_block = masks[block]
            x_rep = np.repeat(X[start:stop], m, axis=0)
            Z = x_rep * grid.expand_masks(mask_block)
            probs = np.asarray(self.model.predict_proba(Z))
            cls_rep = np.repeat(parent_cls[start:stop], m)
            targets = probs[np.arange(len(cls_rep)), cls_rep]
            # patch means of a block-masked instance reduce to mask * patch means
            rows = mask_block * np.repeat(parent_pm[start:stop], m, axis=0)
            w = sample_w[block]
            for cls in np.unique(cls_rep):
                pick = cls_rep == cls
                a = rows[pick]
                t = targets[pick]
                ww = w[pick]
                gram[cls] += a.T @ (a * ww[:, None])
                moment[cls] += a.T @ (ww * t)
                target_sq[cls] += float(np.dot(ww * t, t))
                seen[cls] = True

        weights = np.zeros((n_classes, dp))
        for cls in range(n_classes):
            if not seen[cls]:
                continue
            system = gram[cls] + self.ridge * np.eye(dp)
            if self.ridge == 0.0 and np.linalg.matrix_rank(gram[cls]) < dp:
                raise SingularSystemError(
                    f"class {cls} design is rank deficient with ridge=0"
                )
            weights[cls] = np.linalg.solve(system, moment[cls])

        self.grid_ = grid
        self.weights_ = weights
        self.classes_seen_ = seen
        self.target_norms_ = np.sqrt(target_sq)
        return self

    def transform(self, X) -> np.ndarray:
        """Explanation vectors: weights of each row's predicted class times its
        patch means (elementwise). Shape (n, n_patches)."""
        check_is_fitted(self, "weights_")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        cls = np.asarray(self.model.predict_proba(X)).argmax(axis=1)
        pm = self.grid_.patch_means(X)
        out = self.weights_[cls] * pm
        return out[0] if single else out

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X).transform(X)

    def explanation_distributions(self, X) -> np.ndarray:
        """transform() rows pushed onto the simplex via to_distribution."""
        return to_distribution(self.transform(X), self.epsilon)


def to_distribution(e: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Map attribution vectors to strictly positive distributions: (|e|+eps) normalized."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    e = np.asarray(e, dtype=np.float64)
    shifted = np.abs(e) + eps
    return shifted / shifted.sum(axis=-1, keepdims=True)


def kld(p: np.ndarray, q: np.ndarray) -> float:
    """Kullback-Leibler divergence sum(p * ln(p/q)) for strictly positive vectors."""
    p = check_positive_distribution(p)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatchError(f"shape mismatch {p.shape} vs {q.shape}")
    check_positive_distribution(q)
    return float(np.sum(p * np.log(p / q)))


def mean_divergence_matrix(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row i -> mean_j KLD(P[i], Q[j]) for distribution row matrices P (k, d), Q (s, d)."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if P.shape[1] != Q.shape[1]:
        raise DimensionMismatchError(f"width mismatch {P.shape} vs {Q.shape}")
    if Q.shape[0] == 0:
        raise EmptyPoolError("no reference distributions")
    self_term = np.sum(P * np.log(P), axis=1)
    cross = P @ np.log(Q).T
    return (self_term[:, None] - cross).mean(axis=1)


def mean_divergence(
    explainer: PatchSurrogateExplainer, x_u: np.ndarray, X_labeled: np.ndarray
) -> float:
    """Mean KLD between x_u's explanation distribution and each labeled one."""
    X_labeled = np.atleast_2d(np.asarray(X_labeled, dtype=np.float64))
    if X_labeled.shape[0] == 0:
        raise EmptyPoolError("labeled pool is empty")
    p = explainer.explanation_distributions(np.atleast_2d(x_u))
    Q = explainer.explanation_distributions(X_labeled)
    return float(mean_divergence_matrix(p, Q)[0])
