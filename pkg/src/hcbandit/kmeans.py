"""Lloyd's K-Means with k-means++ seeding and empty-cluster repair."""
from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, InvalidConfigError


def sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d2, 0.0)


def nearest(points: np.ndarray, centroids: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Index of the nearest centroid per point, computed in row chunks to bound memory."""
    out = np.empty(points.shape[0], dtype=np.int64)
    for lo in range(0, points.shape[0], chunk):
        out[lo : lo + chunk] = np.argmin(sq_distances(points[lo : lo + chunk], centroids), axis=1)
    return out


def inertia(points, assignments, centroids) -> float:
    points = np.asarray(points, dtype=np.float64)
    diff = points - np.asarray(centroids)[np.asarray(assignments)]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = sq_distances(points, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point coincides with a chosen center
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = points[idx]
        closest = np.minimum(closest, sq_distances(points, centers[i : i + 1])[:, 0])
    return centers


def _repair_empty(points, assignments, centroids, k):
    counts = np.bincount(assignments, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        d2 = np.einsum("ij,ij->i", points - centroids[assignments], points - centroids[assignments])
        # only steal from clusters that keep at least one point
        d2[counts[assignments] <= 1] = -1.0
        far = int(np.argmax(d2))
        counts[assignments[far]] -= 1
        assignments[far] = empty
        counts[empty] = 1
        centroids[empty] = points[far]
    return assignments


def kmeans(points, k: int, max_iter: int = 100, seed=0, history: list | None = None):
    """Cluster ``points`` into ``k`` groups.

    Returns ``(assignments, centroids)``. Nearest-centroid ties go to the
    lowest centroid index. If ``history`` is given, the inertia after each
    Lloyd iteration is appended to it.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise EmptyInputError("kmeans needs a non-empty 2-d point array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidConfigError(f"k must be in [1, {n}], got {k}")
    if max_iter < 1:
        raise InvalidConfigError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)

    centroids = kmeans_plusplus(points, k, rng)
    assignments = None
    for _ in range(max_iter):
        new = nearest(points, centroids)
        new = _repair_empty(points, new, centroids, k)
        if assignments is not None and np.array_equal(new, assignments):
            break
        assignments = new
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignments, points)
        centroids = sums / np.bincount(assignments, minlength=k)[:, None]
        if history is not None:
            history.append(inertia(points, assignments, centroids))
    return assignments, centroids
