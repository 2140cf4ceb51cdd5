"""
Inducing inputs as K-means cluster centres of the training inputs.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.spatial.distance import cdist

from vigpc.utils import utils, validation
from vigpc.utils.custom_exceptions import NumericalConsistencyError

WCSS_RELATIVE_TOLERANCE = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class InducingSet:
    z: np.ndarray

    def __post_init__(self):
        z = validation.check_matrix(self.z, "z")
        if z.shape[0] < 1:
            utils.log_and_raise_error(
                "At least one inducing point is required.", ValueError
            )
        object.__setattr__(self, "z", z)

    @property
    def m(self) -> int:
        return self.z.shape[0]

    @property
    def num_features(self) -> int:
        return self.z.shape[1]


def kmeans_inducing(
    x: np.ndarray, m: int, seed: int = 0, max_iter: int = 100
) -> InducingSet:
    """
    Lloyd's algorithm with k-means++ seeding.

    Stops at an assignment fixed point or after max_iter iterations.
    A cluster left empty is re-seeded with the point farthest from its
    own centre. The result depends only on (x, m, seed, max_iter).
    """
    x = validation.check_matrix(x, "x")
    num_points = x.shape[0]

    if int(m) != m or not 1 <= m <= num_points:
        utils.log_and_raise_error(
            f"The number of inducing points must satisfy 1 <= m <= n, "
            f"got m = {m} with n = {num_points}.",
            ValueError,
        )
    if int(max_iter) != max_iter or max_iter < 1:
        utils.log_and_raise_error(
            f"'max_iter' must be >= 1, got {max_iter}.", ValueError
        )

    rng = np.random.default_rng(seed)
    centers = _kmeans_plusplus(x, m, rng)

    labels = None
    prev_wcss = np.inf

    for iteration in range(1, max_iter + 1):
        sq_dist = cdist(x, centers, "sqeuclidean")
        new_labels = np.argmin(sq_dist, axis=1)

        if labels is not None and np.array_equal(new_labels, labels):
            utils.log(f"K-means converged after {iteration - 1} iterations.")
            break
        labels = new_labels

        _reseed_empty_clusters(labels, sq_dist, m)

        centers = np.stack(
            [x[labels == k].mean(axis=0) for k in range(m)], axis=0
        )

        wcss = float(np.sum((x - centers[labels]) ** 2))
        if wcss > prev_wcss + WCSS_RELATIVE_TOLERANCE * (1.0 + prev_wcss):
            utils.log_and_raise_error(
                f"K-means within-cluster sum of squares increased from "
                f"{prev_wcss} to {wcss} at iteration {iteration}.",
                NumericalConsistencyError,
            )
        prev_wcss = wcss
    else:
        utils.log(f"K-means stopped at max_iter = {max_iter}.")

    return InducingSet(centers)


def _kmeans_plusplus(
    x: np.ndarray, m: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Each new centre is drawn with probability proportional to its
    squared distance to the nearest chosen centre. When every point
    coincides with a centre the draw is uniform over unchosen points.
    """
    num_points = x.shape[0]

    chosen = [int(rng.integers(num_points))]
    min_sq_dist = cdist(x, x[chosen], "sqeuclidean")[:, 0]

    while len(chosen) < m:
        total = float(np.sum(min_sq_dist))

        if total > 0:
            idx = int(rng.choice(num_points, p=min_sq_dist / total))
        else:
            unchosen = np.setdiff1d(np.arange(num_points), chosen)
            idx = int(rng.choice(unchosen))

        chosen.append(idx)
        min_sq_dist = np.minimum(
            min_sq_dist, cdist(x, x[[idx]], "sqeuclidean")[:, 0]
        )

    return x[chosen].copy()


def _reseed_empty_clusters(
    labels: np.ndarray, sq_dist: np.ndarray, m: int
) -> None:
    """
    Move the point farthest from its centre into each empty cluster,
    in place. Points are only taken from clusters with more than one
    member, so no cluster is emptied.
    """
    counts = np.bincount(labels, minlength=m)
    own_sq_dist = sq_dist[np.arange(labels.size), labels].copy()

    for k in np.flatnonzero(counts == 0):
        candidates = counts[labels] > 1
        farthest = int(np.argmax(np.where(candidates, own_sq_dist, -1.0)))

        counts[labels[farthest]] -= 1
        labels[farthest] = k
        counts[k] += 1
        own_sq_dist[farthest] = 0.0
