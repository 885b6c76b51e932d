"""Deterministic k-means over patch features, with a straight-through gradient.

Lloyd iterations with k-means++ seeding. Assignment ties break toward the lowest
center index, empty clusters steal the point farthest from its own center, and the
whole procedure is reproducible given the rng.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, TooFewPointsError

MAX_LLOYD_ITERS = 50


@dataclass(frozen=True)
class ClusterResult:
    centers: np.ndarray  # (n, d), each the mean of its assigned rows
    assignment: np.ndarray  # (m,) center indices
    iterations_used: int


def _sq_dists(points, centers):
    # (m, n) squared euclidean distances
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp_init(points, n, rng):
    m = points.shape[0]
    first = int(rng.integers(m))
    chosen = [first]
    d2 = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(1, n):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(m))  # all remaining mass zero (duplicate points)
        else:
            r = rng.random() * total
            idx = min(int(np.searchsorted(np.cumsum(d2), r, side="right")), m - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(points, centers, assignment, sizes):
    """Give each empty cluster the point farthest from its own center. Mutates in place."""
    repaired = False
    own_d2 = ((points - centers[assignment]) ** 2).sum(axis=1)
    for j in np.flatnonzero(sizes == 0):
        eligible = sizes[assignment] >= 2
        if not eligible.any():
            break
        cand = np.where(eligible, own_d2, -np.inf)
        p = int(np.argmax(cand))
        sizes[assignment[p]] -= 1
        assignment[p] = j
        sizes[j] = 1
        own_d2[p] = 0.0
        repaired = True
    return repaired


def kmeans(points, n, rng):
    """Cluster (m, d) rows into n centers. Deterministic given the rng."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeMismatchError(f"points must be (m, d), got shape {points.shape}")
    m = points.shape[0]
    if n < 1 or m < n:
        raise TooFewPointsError(f"need m >= n >= 1, got m={m} n={n}")

    centers = _kmeanspp_init(points, n, rng)
    prev_assignment = None
    iterations = 0
    for _ in range(MAX_LLOYD_ITERS):
        iterations += 1
        assignment = np.argmin(_sq_dists(points, centers), axis=1)
        sizes = np.bincount(assignment, minlength=n)
        repaired = _repair_empty(points, centers, assignment, sizes)
        if (prev_assignment is not None and not repaired
                and np.array_equal(assignment, prev_assignment)):
            break
        centers = np.zeros_like(centers)
        np.add.at(centers, assignment, points)
        centers /= sizes[:, None]
        prev_assignment = assignment
    return ClusterResult(centers=centers, assignment=prev_assignment, iterations_used=iterations)


def kmeans_vjp(points, result, d_centers):
    """Straight-through gradient: a center is the mean of its members, assignments held fixed."""
    points = np.asarray(points, dtype=np.float64)
    d_centers = np.asarray(d_centers, dtype=np.float64)
    n = result.centers.shape[0]
    if d_centers.shape != result.centers.shape:
        raise ShapeMismatchError(
            f"d_centers shape {d_centers.shape} != centers shape {result.centers.shape}")
    if points.shape[0] != result.assignment.shape[0] or points.shape[1] != result.centers.shape[1]:
        raise ShapeMismatchError(
            f"points shape {points.shape} inconsistent with result "
            f"({result.assignment.shape[0]} assignments, d={result.centers.shape[1]})")
    sizes = np.bincount(result.assignment, minlength=n)
    return d_centers[result.assignment] / sizes[result.assignment][:, None]


def lloyd_objective(points, result):
    """Sum of squared distances of each point to its assigned center."""
    points = np.asarray(points, dtype=np.float64)
    return float(((points - result.centers[result.assignment]) ** 2).sum())
