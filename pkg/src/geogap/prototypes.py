"""Type centroids, hard and soft (Gibbs) assignment, temperature calibration.

A type's centroid is the renormalised mean of its labelled member vectors.
Hard assignment picks the nearest centroid; soft assignment is a softmax
over negative cosine distances scaled by 1/T, so its argmax always agrees
with the hard assignment and T controls how peaked the distribution is.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Requirement, Taxonomy
from .embeddings import EmbeddingStore

MIN_CENTROID_NORM = 1e-12


class CentroidError(ValueError):
    """Degenerate centroid (zero-norm vector sum) or missing labels."""


class CalibrationError(RuntimeError):
    """Temperature target unreachable within the search bracket."""


@dataclass(frozen=True)
class TypeCentroids:
    """Per-type unit centroids; types with no labelled points are absent.

    ``mu`` has one row per taxonomy type. Rows for absent types are zero and
    flagged False in ``present``; they never win an assignment.
    """

    taxonomy: Taxonomy
    mu: np.ndarray
    present: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def present_indices(self) -> np.ndarray:
        return np.flatnonzero(self.present)


def compute_centroids(
    store: EmbeddingStore, labelled: Sequence[Requirement], taxonomy: Taxonomy
) -> TypeCentroids:
    """Renormalised mean vector per type from labelled requirements."""
    if not labelled:
        raise CentroidError("no labelled requirements")
    k_t = taxonomy.k_t
    sums = np.zeros((k_t, store.dim))
    counts = np.zeros(k_t, dtype=int)
    for r in labelled:
        if r.type_label is None:
            raise CentroidError(f"requirement {r.id!r} has no type label")
        t = taxonomy.index(r.type_label)
        sums[t] += store.vector(r.id)
        counts[t] += 1
    mu = np.zeros_like(sums)
    present = counts > 0
    for t in np.flatnonzero(present):
        norm = float(np.linalg.norm(sums[t]))
        if norm < MIN_CENTROID_NORM:
            raise CentroidError(
                f"type {taxonomy.type_names[t]!r}: member vectors sum to (near) zero"
            )
        mu[t] = sums[t] / norm
    return TypeCentroids(taxonomy=taxonomy, mu=mu, present=present)


def centroid_distances(x: np.ndarray, c: TypeCentroids) -> np.ndarray:
    """Cosine distance from x to every present centroid (inf for absent)."""
    x = np.asarray(x, dtype=np.float64)
    d = 1.0 - c.mu @ x
    d[~c.present] = np.inf
    return d


def hard_assign(x: np.ndarray, c: TypeCentroids) -> int:
    """Index of the nearest centroid; ties break by taxonomy order."""
    d = centroid_distances(x, c)
    return int(np.argmin(d))


def hard_assign_all(matrix: np.ndarray, c: TypeCentroids) -> np.ndarray:
    """Vectorised hard_assign over the rows of matrix."""
    d = 1.0 - np.asarray(matrix, dtype=np.float64) @ c.mu.T
    d[:, ~c.present] = np.inf
    return np.argmin(d, axis=1)


def soft_assign(x: np.ndarray, c: TypeCentroids, temperature: float) -> np.ndarray:
    """Gibbs distribution over types: softmax of -distance/T.

    Computed with max-subtraction so tiny temperatures stay finite. Absent
    types get exactly zero mass; the row sums to 1.
    """
    return soft_assign_all(np.asarray(x, dtype=np.float64)[None, :], c, temperature)[0]


def soft_assign_all(matrix: np.ndarray, c: TypeCentroids, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    logits = -(1.0 - np.asarray(matrix, dtype=np.float64) @ c.mu.T) / temperature
    logits[:, ~c.present] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p


def hard_accuracy(
    store: EmbeddingStore, labelled: Sequence[Requirement], c: TypeCentroids
) -> tuple[float, float]:
    """(accuracy, macro-F1) of hard assignment against ground-truth labels.

    Macro-F1 averages per-class F1 over classes that actually occur in the
    ground truth; classes the data lacks are skipped, not counted as zero.
    """
    if not labelled:
        raise CentroidError("no labelled requirements")
    tax = c.taxonomy
    truth = np.array([tax.index(r.type_label) for r in labelled])
    mat = store.submatrix([r.id for r in labelled])
    pred = hard_assign_all(mat, c)
    acc = float(np.mean(pred == truth))
    f1s = []
    for t in range(tax.k_t):
        support = int(np.sum(truth == t))
        if support == 0:
            continue
        tp = int(np.sum((pred == t) & (truth == t)))
        fp = int(np.sum((pred == t) & (truth != t)))
        fn = support - tp
        f1s.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return acc, float(np.mean(f1s))


def mean_max_confidence(matrix: np.ndarray, c: TypeCentroids, temperature: float) -> float:
    """Mean over rows of the winning soft-assignment probability."""
    return float(soft_assign_all(matrix, c, temperature).max(axis=1).mean())


def calibrate_temperature(
    store: EmbeddingStore,
    labelled: Sequence[Requirement],
    c: TypeCentroids,
    target_confidence: float,
    bracket: tuple[float, float] = (1e-4, 10.0),
    tol: float = 1e-4,
    max_iter: int = 200,
) -> float:
    """Find T so the mean max soft-assignment probability hits the target.

    Mean max-confidence is monotone non-increasing in T (1 as T -> 0, 1/K as
    T -> inf), so bisection on log T converges. Raises CalibrationError with
    the achievable bounds when the target falls outside the bracket.
    """
    n_present = int(c.present.sum())
    if not (1.0 / n_present < target_confidence < 1.0):
        raise CalibrationError(
            f"target confidence {target_confidence} outside (1/{n_present}, 1)"
        )
    mat = store.submatrix([r.id for r in labelled])
    lo, hi = bracket
    conf_lo = mean_max_confidence(mat, c, lo)   # highest achievable
    conf_hi = mean_max_confidence(mat, c, hi)   # lowest achievable
    if target_confidence > conf_lo + tol or target_confidence < conf_hi - tol:
        raise CalibrationError(
            f"target {target_confidence:.6f} unreachable: bracket achieves "
            f"[{conf_hi:.6f}, {conf_lo:.6f}]"
        )
    log_lo, log_hi = np.log(lo), np.log(hi)
    best_t, best_gap = lo, abs(conf_lo - target_confidence)
    for _ in range(max_iter):
        mid = float(np.exp((log_lo + log_hi) / 2))
        conf = mean_max_confidence(mat, c, mid)
        gap = abs(conf - target_confidence)
        if gap < best_gap:
            best_t, best_gap = mid, gap
        if gap <= tol:
            return mid
        if conf > target_confidence:
            log_lo = np.log(mid)   # too confident -> warm up
        else:
            log_hi = np.log(mid)
    if best_gap <= tol:
        return best_t
    raise CalibrationError(
        f"bisection stalled at residual {best_gap:.2e} (tol {tol:g})"
    )
