"""Input validation helpers shared across the public API."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError


def check_feature_matrix(X, n_features: int | None = None) -> np.ndarray:
    """Coerce to a float64 (n, d) matrix, optionally enforcing d."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d matrix, got ndim={X.ndim}")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatchError(f"expected {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return X


def check_posterior(p, n_classes: int | None = None, tol: float = 1e-6) -> np.ndarray:
    """Validate a probability vector: non-negative entries summing to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got ndim={p.ndim}")
    if n_classes is not None and p.shape[0] != n_classes:
        raise DimensionMismatchError(f"expected {n_classes} entries, got {p.shape[0]}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > tol:
        raise ValueError(f"not a probability vector (sum={p.sum()!r})")
    return p


def check_positive_distribution(p) -> np.ndarray:
    """Validate a strictly positive probability vector (KLD domain)."""
    p = check_posterior(p, tol=1e-6)
    if np.any(p <= 0):
        raise ValueError("distribution entries must be strictly positive")
    return p
