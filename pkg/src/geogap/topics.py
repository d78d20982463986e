"""Soft topic distributions: external ingestion or spherical-clustering fallback.

Every requirement gets a probability vector over K_s topics. Distributions
can be ingested from any external topic-modelling run (the file just has to
provide valid simplex rows), or produced in-process by spherical k-means
over the embeddings followed by a Gibbs softmax, which guarantees strictly
positive rows: no requirement is ever dropped as an outlier.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore

SUM_TOLERANCE = 1e-3
MAX_ITERATIONS = 100


class TopicFileError(ValueError):
    """Missing id, negative entry, or a row too far from the simplex."""


@dataclass(frozen=True)
class TopicModel:
    """Topic space metadata; centroids/temperature only exist in fallback mode."""

    k_s: int
    labels: tuple[str, ...]
    centroids: np.ndarray | None = None
    temperature: float | None = None

    @property
    def is_fallback(self) -> bool:
        return self.centroids is not None


@dataclass(frozen=True)
class TopicDistribution:
    """Per-requirement probability vectors over K_s topics."""

    k_s: int
    pi: Mapping[str, np.ndarray]

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.vstack([self.pi[rid] for rid in ids])
        except KeyError as exc:
            raise TopicFileError(f"no topic distribution for id {exc.args[0]!r}") from None

    def total_mass(self) -> float:
        return float(sum(v.sum() for v in self.pi.values()))


def ingest_topics(
    path: str | Path, expected_ids: Iterable[str]
) -> tuple[TopicModel, TopicDistribution]:
    """Read a topic-distribution JSONL file and validate every row.

    First line is a metadata header {"k_s": ..., "labels": [...]}; each
    following line is {"id": ..., "pi": [...]}. Rows must be non-negative
    and sum to 1; deviations up to 1e-3 are renormalised, larger ones are
    an error naming the offending id.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise TopicFileError(f"{path.name}: empty file")
    header = json.loads(lines[0])
    if "k_s" not in header:
        raise TopicFileError(f"{path.name}: first line must be a header with 'k_s'")
    k_s = int(header["k_s"])
    labels = tuple(header.get("labels") or [f"topic_{i}" for i in range(k_s)])
    if len(labels) != k_s:
        raise TopicFileError(f"{path.name}: {len(labels)} labels for k_s={k_s}")

    pi: dict[str, np.ndarray] = {}
    for n, line in enumerate(lines[1:], start=2):
        obj = json.loads(line)
        rid = str(obj.get("id"))
        row = np.asarray(obj.get("pi"), dtype=np.float64)
        if row.shape != (k_s,):
            raise TopicFileError(f"{path.name} line {n}: id {rid!r} has {row.size} entries, "
                                 f"expected {k_s}")
        if np.any(row < 0):
            raise TopicFileError(f"{path.name} line {n}: id {rid!r} has a negative entry")
        total = float(row.sum())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise TopicFileError(
                f"{path.name} line {n}: id {rid!r} sums to {total:.6f}, not 1"
            )
        pi[rid] = row / total
    missing = [rid for rid in expected_ids if rid not in pi]
    if missing:
        raise TopicFileError(f"{path.name}: no distribution for id {missing[0]!r} "
                             f"({len(missing)} missing in total)")
    model = TopicModel(k_s=k_s, labels=labels)
    return model, TopicDistribution(k_s=k_s, pi=pi)


def save_topics(
    path: str | Path, dist: TopicDistribution, labels: Sequence[str] | None = None
) -> None:
    """Write distributions in the ingestion JSONL format (header + rows)."""
    labels = list(labels) if labels else [f"topic_{i}" for i in range(dist.k_s)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"k_s": dist.k_s, "labels": labels}) + "\n")
        for rid, row in dist.pi.items():
            fh.write(json.dumps({"id": rid, "pi": [float(x) for x in row]}) + "\n")


def _cosine_distance_matrix(mat: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return 1.0 - mat @ centroids.T


def _kmeanspp_init(mat: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding with cosine distance as the metric."""
    n = mat.shape[0]
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        d = _cosine_distance_matrix(mat, mat[chosen]).min(axis=1)
        w = np.maximum(d, 0.0) ** 2
        total = float(w.sum())
        if total <= 0.0:
            chosen.append(int(rng.integers(n)))
        else:
            chosen.append(int(rng.choice(n, p=w / total)))
    return mat[chosen].copy()


def fit_fallback_topics(
    store: EmbeddingStore,
    ids: Sequence[str],
    k_s: int,
    seed: int,
    temperature: float = 0.1,
) -> TopicModel:
    """Spherical k-means over the given ids; deterministic for a fixed seed.

    Assign-to-nearest / renormalised-mean updates run until the assignment
    reaches a fixpoint or 100 iterations. Empty clusters are reseeded from
    the point farthest from its nearest non-empty centroid.
    """
    if k_s < 1:
        raise ValueError("k_s must be >= 1")
    if k_s > len(ids):
        raise ValueError(f"k_s={k_s} exceeds the {len(ids)} available points")
    mat = store.submatrix(ids)
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(mat, k_s, rng)

    assign = np.full(len(ids), -1, dtype=int)
    for _ in range(MAX_ITERATIONS):
        d = _cosine_distance_matrix(mat, centroids)
        new_assign = np.argmin(d, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k_s):
            members = mat[assign == c]
            if len(members) == 0:
                # reseed from the globally worst-covered point
                nearest = _cosine_distance_matrix(mat, centroids).min(axis=1)
                centroids[c] = mat[int(np.argmax(nearest))]
                continue
            mean = members.mean(axis=0)
            norm = float(np.linalg.norm(mean))
            if norm > 0:
                centroids[c] = mean / norm
    labels = tuple(f"topic_{i}" for i in range(k_s))
    return TopicModel(k_s=k_s, labels=labels, centroids=centroids, temperature=temperature)


def soft_topics(
    store: EmbeddingStore, ids: Sequence[str], tm: TopicModel
) -> TopicDistribution:
    """Gibbs softmax over cosine distances to the fallback topic centroids."""
    if not tm.is_fallback or tm.temperature is None:
        raise ValueError("soft_topics needs a fallback-mode model with centroids")
    mat = store.submatrix(ids)
    logits = -_cosine_distance_matrix(mat, tm.centroids) / tm.temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return TopicDistribution(k_s=tm.k_s, pi={rid: p[i] for i, rid in enumerate(ids)})
