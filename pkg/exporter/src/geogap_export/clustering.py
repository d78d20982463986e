"""Spherical k-means and Gibbs topic rows for the fallback topic export.

Follows the documented clustering contract shared with the consumer
package so both sides produce the same model for the same seed: k-means++
seeding on squared cosine distance (first centre uniform, degenerate
weights fall back to uniform), assign/renormalised-mean iterations to an
assignment fixpoint or 100 rounds, empty clusters reseeded from the point
farthest from its nearest centroid.
"""
from __future__ import annotations

import numpy as np

from .records import ExportError

MAX_ROUNDS = 100


def spherical_kmeans(matrix: np.ndarray, k: int, seed: int) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if k < 1:
        raise ExportError("k must be >= 1")
    if k > n:
        raise ExportError(f"k={k} exceeds the {n} available points")
    rng = np.random.default_rng(seed)

    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        nearest = (1.0 - matrix @ matrix[chosen].T).min(axis=1)
        weight = np.maximum(nearest, 0.0) ** 2
        total = float(weight.sum())
        if total <= 0.0:
            chosen.append(int(rng.integers(n)))
        else:
            chosen.append(int(rng.choice(n, p=weight / total)))
    centroids = matrix[chosen].copy()

    assignment = np.full(n, -1, dtype=int)
    for _ in range(MAX_ROUNDS):
        current = np.argmin(1.0 - matrix @ centroids.T, axis=1)
        if np.array_equal(current, assignment):
            break
        assignment = current
        for c in range(k):
            members = matrix[assignment == c]
            if members.shape[0] == 0:
                nearest = (1.0 - matrix @ centroids.T).min(axis=1)
                centroids[c] = matrix[int(np.argmax(nearest))]
                continue
            mean = members.mean(axis=0)
            norm = float(np.linalg.norm(mean))
            if norm > 0:
                centroids[c] = mean / norm
    return centroids


def topic_rows(matrix: np.ndarray, centroids: np.ndarray,
               temperature: float) -> np.ndarray:
    """Softmax over negative cosine distances; every row a strict simplex."""
    if temperature <= 0:
        raise ExportError("temperature must be > 0")
    logits = -(1.0 - matrix @ centroids.T) / temperature
    logits -= logits.max(axis=1, keepdims=True)
    rows = np.exp(logits)
    rows /= rows.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(rows)) or np.any(rows < 0) \
            or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-9):
        raise ExportError("refusing to write non-simplex topic rows")
    return rows
