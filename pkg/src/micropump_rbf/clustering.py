"""K-means center placement and per-center kernel widths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

WIDTH_FLOOR = 1e-3


@dataclass(frozen=True)
class ClusterResult:
    centers: np.ndarray  # (K, D)
    assignments: np.ndarray  # (N,) int
    iterations: int
    converged: bool
    sse: float  # sum of squared distances, the objective recentering minimizes
    quantization_error: float  # sum of unsquared distances
    history: tuple = field(default=(), repr=False)  # quantization error per iteration
    sse_history: tuple = field(default=(), repr=False)  # squared-distance objective per iteration
    seed: int = 0
    restart: int = 0

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def quantization_error(points, centers, assignments) -> float:
    """Sum over points of the Euclidean distance to the assigned center."""
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    assignments = np.asarray(assignments)
    if points.ndim != 2 or centers.ndim != 2 or points.shape[1] != centers.shape[1]:
        raise DomainError("points and centers must be 2-D with matching dimension")
    if assignments.shape != (points.shape[0],):
        raise DomainError("one assignment per point required")
    if assignments.size and (assignments.min() < 0 or assignments.max() >= centers.shape[0]):
        raise DomainError("assignment index out of range")
    return float(np.linalg.norm(points - centers[assignments], axis=1).sum())


def _sse(points, centers, assignments) -> float:
    diff = points - centers[assignments]
    return float(np.einsum("nd,nd->", diff, diff))


def _repair_empty(points, centers, assignments, k):
    """Reseed each empty cluster with the point farthest from its own center."""
    repaired = False
    for j in range(k):
        counts = np.bincount(assignments, minlength=k)
        if counts[j]:
            continue
        dist = np.linalg.norm(points - centers[assignments], axis=1)
        dist[counts[assignments] <= 1] = -1.0  # never empty a donor cluster
        far = int(np.argmax(dist))
        if dist[far] < 0:
            break
        assignments[far] = j
        centers[j] = points[far]
        repaired = True
    return repaired


def _lloyd(points, k, rng, max_iter):
    n = points.shape[0]
    centers = points[np.sort(rng.choice(n, size=k, replace=False))].copy()
    prev = None
    history, sse_history = [], []
    converged = False
    for iterations in range(1, max_iter + 1):
        assignments = np.argmin(_sq_dists(points, centers), axis=1)
        if prev is not None and np.array_equal(assignments, prev):
            converged = True
            history.append(quantization_error(points, centers, assignments))
            sse_history.append(_sse(points, centers, assignments))
            break
        repaired = _repair_empty(points, centers, assignments, k)
        for j in range(k):
            centers[j] = points[assignments == j].mean(axis=0)
        history.append(quantization_error(points, centers, assignments))
        sse_history.append(_sse(points, centers, assignments))
        # a repaired step is not a plain assignment step, so it cannot confirm convergence
        prev = None if repaired else assignments
    return centers, assignments, iterations, converged, history, sse_history


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300, restarts: int = 1) -> ClusterResult:
    """Lloyd's K-means with data-point initialization; keeps the restart with
    the lowest squared-distance objective (ties go to the earlier restart)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DomainError("points must be a 2-D array")
    n = points.shape[0]
    if k < 1 or n < k:
        raise DomainError(f"need N >= K >= 1, got N={n}, K={k}")
    if restarts < 1 or max_iter < 1:
        raise DomainError("restarts and max_iter must be at least 1")

    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        centers, assignments, iterations, converged, history, sse_history = _lloyd(points, k, rng, max_iter)
        sse = _sse(points, centers, assignments)
        if best is None or sse < best.sse:
            best = ClusterResult(
                centers=centers,
                assignments=assignments,
                iterations=iterations,
                converged=converged,
                sse=sse,
                quantization_error=quantization_error(points, centers, assignments),
                history=tuple(history),
                sse_history=tuple(sse_history),
                seed=seed,
                restart=r,
            )
    return best


def assign(points, centers) -> np.ndarray:
    """Index of the nearest center for every point."""
    return np.argmin(_sq_dists(np.asarray(points, float), np.asarray(centers, float)), axis=1)


def widths(points, assignments, centers, input_dim: int | None = None, floor: float = WIDTH_FLOOR) -> np.ndarray:
    """Mean distance from each cluster's members to its center, measured over
    the first ``input_dim`` coordinates. Singleton clusters get ``floor``."""
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    assignments = np.asarray(assignments)
    m = points.shape[1] if input_dim is None else input_dim
    k = centers.shape[0]
    out = np.empty(k)
    for j in range(k):
        members = points[assignments == j, :m]
        if members.shape[0] == 0:
            raise DomainError(f"cluster {j} is empty")
        if members.shape[0] == 1:
            out[j] = floor
            continue
        out[j] = max(float(np.linalg.norm(members - centers[j, :m], axis=1).mean()), floor)
    return out
