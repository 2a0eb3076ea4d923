"""Selection strategies over the unlabeled pool: rs, us-p, us-m, dw, alex.

Every strategy sees the same SelectionContext and returns exactly
ctx.batch_size unique source indices drawn from the unlabeled pool. Ties in
any ranking are broken by ascending source index so selections are
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledPool, UnlabeledPool
from .errors import (
    BatchTooLargeError,
    MissingSurrogateError,
    NoCentroidsError,
    TooFewPointsError,
)
from .explain import PatchSurrogateExplainer, mean_divergence_matrix
from .net import margin_score, uncertainty_score


@dataclass
class SelectionContext:
    """Everything a selector may look at. Ground-truth labels of unlabeled
    instances are not reachable from here."""

    model: object  # trained classifier with predict_proba
    features: np.ndarray  # (n_total, d), indexed by source index
    labeled: LabeledPool
    unlabeled: UnlabeledPool
    batch_size: int
    candidate_size: int | None = None  # k, ALEX only
    surrogate: PatchSurrogateExplainer | None = None
    centroids: np.ndarray | None = None  # (c, d), DW only
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


@dataclass
class SelectionResult:
    chosen: np.ndarray  # (b,) source indices, ranking order
    diagnostics: dict[str, dict[int, float]] = field(default_factory=dict)


def _check_batch(ctx: SelectionContext) -> np.ndarray:
    pool = ctx.unlabeled.indices
    if ctx.batch_size > len(pool):
        raise BatchTooLargeError(
            f"batch {ctx.batch_size} exceeds unlabeled pool of {len(pool)}"
        )
    return pool


def _rank_ascending(indices: np.ndarray, scores: np.ndarray, take: int) -> np.ndarray:
    """Smallest scores first; ties by ascending source index."""
    order = np.lexsort((indices, scores))
    return indices[order[:take]]


def _rank_descending(indices: np.ndarray, scores: np.ndarray, take: int) -> np.ndarray:
    """Largest scores first; ties by ascending source index."""
    order = np.lexsort((indices, -scores))
    return indices[order[:take]]


def select_random(ctx: SelectionContext) -> SelectionResult:
    """Uniform sample without replacement from the unlabeled pool."""
    pool = _check_batch(ctx)
    chosen = ctx.rng.choice(pool, size=ctx.batch_size, replace=False)
    return SelectionResult(chosen=chosen.astype(np.int64))


def select_uncertainty(ctx: SelectionContext) -> SelectionResult:
    """US-P: the instances with the lowest maximum posterior."""
    pool = _check_batch(ctx)
    probs = np.asarray(ctx.model.predict_proba(ctx.features[pool]))
    scores = uncertainty_score(probs)
    chosen = _rank_ascending(pool, scores, ctx.batch_size)
    return SelectionResult(
        chosen=chosen, diagnostics={"uncertainty": dict(zip(pool.tolist(), scores))}
    )


def select_margin(ctx: SelectionContext) -> SelectionResult:
    """US-M: the instances with the smallest top-1/top-2 posterior gap."""
    pool = _check_batch(ctx)
    probs = np.asarray(ctx.model.predict_proba(ctx.features[pool]))
    scores = margin_score(probs)
    chosen = _rank_ascending(pool, scores, ctx.batch_size)
    return SelectionResult(
        chosen=chosen, diagnostics={"margin": dict(zip(pool.tolist(), scores))}
    )


def kmeans(
    points: np.ndarray,
    n_clusters: int,
    rng: np.random.Generator,
    iters: int = 100,
) -> np.ndarray:
    """Lloyd iterations from a random-instance initialization.

    Runs at most `iters` assignment/update rounds, stopping early once
    assignments stabilize. An emptied cluster is reseeded from the point
    farthest from its own centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < n_clusters:
        raise TooFewPointsError(f"{n} points < {n_clusters} clusters")
    centroids = points[rng.choice(n, size=n_clusters, replace=False)].copy()
    assignment = np.full(n, -1)
    for _ in range(iters):
        dists = _sq_distances(points, centroids)
        new_assignment = dists.argmin(axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        nearest = dists[np.arange(n), assignment]
        for j in range(n_clusters):
            members = assignment == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
            else:
                centroids[j] = points[nearest.argmax()]
    return centroids


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||p - c||^2 expanded; clip guards tiny negative rounding artifacts
    sq = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def select_density_weighted(ctx: SelectionContext) -> SelectionResult:
    """DW: the instances farthest from any centroid occupied by labeled data."""
    pool = _check_batch(ctx)
    if ctx.centroids is None:
        raise NoCentroidsError("density-weighted selection needs precomputed centroids")
    labeled_x = ctx.features[ctx.labeled.indices]
    occupied = np.unique(_sq_distances(labeled_x, ctx.centroids).argmin(axis=1))
    dists = np.sqrt(_sq_distances(ctx.features[pool], ctx.centroids[occupied]))
    scores = dists.min(axis=1)
    chosen = _rank_descending(pool, scores, ctx.batch_size)
    return SelectionResult(
        chosen=chosen, diagnostics={"centroid_distance": dict(zip(pool.tolist(), scores))}
    )


def select_alex(ctx: SelectionContext) -> SelectionResult:
    """Uncertainty-filtered explanation divergence.

    1. score every unlabeled instance by max posterior s(x);
    2. keep the k lowest as candidates;
    3. rank candidates by mean KL divergence between their explanation
       distribution and those of the labeled pool;
    4. return the b most divergent.
    """
    pool = _check_batch(ctx)
    if ctx.surrogate is None:
        raise MissingSurrogateError("alex selection needs a fitted surrogate")
    k = ctx.candidate_size if ctx.candidate_size is not None else 3 * ctx.batch_size
    if k < ctx.batch_size:
        raise ValueError(f"candidate size {k} < batch size {ctx.batch_size}")
    k = min(k, len(pool))

    probs = np.asarray(ctx.model.predict_proba(ctx.features[pool]))
    s = uncertainty_score(probs)
    candidates = _rank_ascending(pool, s, k)

    P = ctx.surrogate.explanation_distributions(ctx.features[candidates])
    Q = ctx.surrogate.explanation_distributions(ctx.features[ctx.labeled.indices])
    dbar = mean_divergence_matrix(P, Q)
    chosen = _rank_descending(candidates, dbar, ctx.batch_size)
    return SelectionResult(
        chosen=chosen,
        diagnostics={
            "uncertainty": dict(zip(pool.tolist(), s)),
            "divergence": dict(zip(candidates.tolist(), dbar)),
        },
    )


STRATEGIES = {
    "rs": select_random,
    "us-p": select_uncertainty,
    "us-m": select_margin,
    "dw": select_density_weighted,
    "alex": select_alex,
}
