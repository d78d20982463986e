"""Gap scores: per-point coverage z-scores, type-restricted and population
scores, cell aggregation, occupancy, fusion, and project weighting.

The per-point score asks, for every reference point, whether the target's
nearest requirements are unusually far compared to what individual corpus
projects achieve; the type-restricted score asks the same with the search
limited to same-type requirements; the population score compares soft type
counts. All three are z-scores against per-project baselines, clipped to
[-5, 5], and fuse through a convex combination with weights (beta, gamma).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .artifacts import CorpusArtifacts
from .corpus import Taxonomy
from .embeddings import EmbeddingStore
from .prototypes import TypeCentroids, hard_assign_all, soft_assign_all
from .topics import TopicDistribution, TopicModel

CLIP = 5.0

#: (beta, gamma) presets: geometric only, geometric + type-restricted, full.
PRESETS: dict[str, tuple[float, float]] = {
    "geogap-g": (1.0, 0.0),
    "geogap-gt": (0.7, 0.0),
    "geogap": (0.7, 0.1),
}


class ScoringError(ValueError):
    """Empty target, bad hyperparameter, or artifact/config mismatch."""


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring hyperparameters; defaults are the recommended full setup."""

    k: int = 1
    beta: float = 0.7
    gamma: float = 0.1
    epsilon: float = 1e-6
    mode: str = "A"
    tau: float = 0.1
    k_s: int = 8
    excluded_types: tuple[str, ...] = ()
    temperature: float | None = None         # None -> calibrate from accuracy
    target_confidence: float | None = None   # None -> measured hard accuracy

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta <= 1.0):
            raise ScoringError(f"beta must be in [0, 1], got {self.beta}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ScoringError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.epsilon <= 0:
            raise ScoringError("epsilon must be > 0")
        if self.mode not in ("A", "B"):
            raise ScoringError(f"mode must be 'A' or 'B', got {self.mode!r}")
        if self.k < 1:
            raise ScoringError("k must be >= 1")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ScoreConfig":
        try:
            beta, gamma = PRESETS[name]
        except KeyError:
            raise ScoringError(
                f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}"
            ) from None
        return cls(**{"beta": beta, "gamma": gamma, **overrides})


@dataclass(frozen=True)
class Target:
    """A project to score: ids, unit-vector rows, optional topic rows."""

    ids: tuple[str, ...]
    matrix: np.ndarray
    topics: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_store(cls, store: EmbeddingStore, ids: Sequence[str],
                   topics: TopicDistribution | None = None) -> "Target":
        mat = store.submatrix(ids)
        pi = topics.matrix(ids) if topics is not None else None
        return cls(ids=tuple(ids), matrix=mat, topics=pi)


@dataclass(frozen=True)
class ProjectWeights:
    """Normalised non-negative weights over the training projects."""

    w: np.ndarray
    mode: str

    def __post_init__(self) -> None:
        if abs(float(self.w.sum()) - 1.0) > 1e-9:
            raise ScoringError("project weights must sum to 1")
        if np.any(self.w < 0):
            raise ScoringError("project weights must be non-negative")


@dataclass
class GapResult:
    """Per-type gap scores plus the cell grid and occupancy."""

    type_names: tuple[str, ...]
    topic_labels: tuple[str, ...]
    psi_geo: np.ndarray
    psi_type: np.ndarray
    psi_pop: np.ndarray
    psi_fused: np.ndarray
    psi_cell: np.ndarray            # (K_t, K_s)
    cell_mass: np.ndarray           # (K_t, K_s) corpus soft mass per cell
    occupancy: np.ndarray           # (K_t, K_s) target soft mass per cell
    per_point_psi: np.ndarray       # (N,) over corpus points
    flags: dict[str, list[str]]
    config: dict
    n_target: int
    fingerprint: str | None = None

    def ranking(self) -> list[int]:
        """Type indices by fused score descending; ties by taxonomy order."""
        order = np.lexsort((np.arange(len(self.psi_fused)), -self.psi_fused))
        return [int(i) for i in order]


def clip_score(z: np.ndarray | float) -> np.ndarray | float:
    return np.clip(z, -CLIP, CLIP)


# ---------------------------------------------------------------------------
# Coverage distances
# ---------------------------------------------------------------------------


def phi(x: np.ndarray, target_ids: Sequence[str], k: int, store: EmbeddingStore) -> float:
    """Mean cosine distance from x to its k nearest points among target_ids."""
    if len(target_ids) == 0:
        raise ScoringError("coverage distance needs a non-empty target")
    res = store.knn(np.asarray(x, dtype=np.float64), list(target_ids), k)
    return float(np.mean(res.distances))


def phi_to_set(points: np.ndarray, target_matrix: np.ndarray, k: int) -> np.ndarray:
    """Vectorised phi: one mean-of-k-smallest distance per row of points."""
    if target_matrix.shape[0] == 0:
        raise ScoringError("coverage distance needs a non-empty target")
    k = min(k, target_matrix.shape[0])
    d = 1.0 - points @ target_matrix.T
    if k == 1:
        return d.min(axis=1)
    part = np.partition(d, k - 1, axis=1)[:, :k]
    return part.mean(axis=1)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def fit_baselines(
    training: Mapping[str, Sequence[str]],
    k: int,
    store: EmbeddingStore,
    taxonomy: Taxonomy,
    centroids: TypeCentroids,
    temperature: float,
    topics: TopicDistribution,
    labels: Mapping[str, str],
    topic_model: TopicModel,
) -> CorpusArtifacts:
    """Pool the training projects and precompute all per-project statistics.

    A point's coverage distance is measured against every training project
    except its own: the home project contains the point at distance zero
    and would drag the baseline down. Per-type entries are NaN for projects
    with nothing of that type; the z-score machinery masks them out.
    """
    projects = tuple(training.keys())
    if len(projects) < 2:
        raise ScoringError("need at least 2 training projects")
    corpus_ids: list[str] = []
    proj_idx: list[int] = []
    for j, pid in enumerate(projects):
        ids = list(training[pid])
        if not ids:
            raise ScoringError(f"training project {pid!r} has no requirements")
        corpus_ids.extend(ids)
        proj_idx.extend([j] * len(ids))
    corpus_project_idx = np.asarray(proj_idx)
    corpus_matrix = store.submatrix(corpus_ids)
    n, m = len(corpus_ids), len(projects)

    type_idx = np.empty(n, dtype=int)
    for i, rid in enumerate(corpus_ids):
        label = labels.get(rid)
        if label is None:
            raise ScoringError(f"corpus requirement {rid!r} has no type label")
        type_idx[i] = taxonomy.index(label)

    hard_type = hard_assign_all(corpus_matrix, centroids)
    corpus_topics = topics.matrix(corpus_ids)

    # Coverage distance of every corpus point against each project.
    dist = 1.0 - corpus_matrix @ corpus_matrix.T
    phi_pp = np.empty((n, m))
    for j in range(m):
        cols = np.flatnonzero(corpus_project_idx == j)
        kj = min(k, len(cols))
        block = dist[:, cols]
        if kj == 1:
            phi_pp[:, j] = block.min(axis=1)
        else:
            phi_pp[:, j] = np.partition(block, kj - 1, axis=1)[:, :kj].mean(axis=1)
        phi_pp[corpus_project_idx == j, j] = np.nan

    # Type-restricted distance with each project in the target role. The
    # reference side uses ground-truth labels (the corpus is annotated);
    # the target-role side uses hard assignment, mirroring inference where
    # targets arrive unlabelled.
    d_t_pj = np.full((taxonomy.k_t, m), np.nan)
    for t in range(taxonomy.k_t):
        ref_rows = np.flatnonzero(type_idx == t)
        if len(ref_rows) == 0:
            continue
        for j in range(m):
            member_cols = np.flatnonzero((corpus_project_idx == j) & (hard_type == t))
            ref_other = ref_rows[corpus_project_idx[ref_rows] != j]
            if len(member_cols) == 0 or len(ref_other) == 0:
                continue
            d_t_pj[t, j] = dist[np.ix_(ref_other, member_cols)].min(axis=1).mean()

    # Soft type counts per project.
    soft = soft_assign_all(corpus_matrix, centroids, temperature)
    n_t_pj = np.empty((taxonomy.k_t, m))
    for j in range(m):
        n_t_pj[:, j] = soft[corpus_project_idx == j].sum(axis=0)

    project_centroids = np.empty((m, store.dim))
    for j in range(m):
        mean = corpus_matrix[corpus_project_idx == j].mean(axis=0)
        project_centroids[j] = mean / np.linalg.norm(mean)

    type_presence = np.zeros((taxonomy.k_t, m), dtype=bool)
    for j in range(m):
        type_presence[np.unique(type_idx[corpus_project_idx == j]), j] = True

    return CorpusArtifacts(
        taxonomy=taxonomy,
        k=k,
        projects=projects,
        corpus_ids=tuple(corpus_ids),
        corpus_project_idx=corpus_project_idx,
        corpus_matrix=corpus_matrix,
        corpus_type_idx=type_idx,
        corpus_hard_type=hard_type,
        centroids=centroids,
        temperature=temperature,
        topic_model=topic_model,
        corpus_topics=corpus_topics,
        phi_pp=phi_pp,
        d_t_pj=d_t_pj,
        n_t_pj=n_t_pj,
        project_centroids=project_centroids,
        type_presence=type_presence,
    )


# ---------------------------------------------------------------------------
# Score components
# ---------------------------------------------------------------------------


def project_weights(
    mode: str,
    target_centroid: np.ndarray | None,
    training_centroids: np.ndarray,
    tau: float = 0.1,
) -> ProjectWeights:
    """Uniform (mode A) or similarity-softmax (mode B) project weights."""
    m = training_centroids.shape[0]
    if m < 1:
        raise ScoringError("need at least one training project")
    if mode == "A":
        return ProjectWeights(w=np.full(m, 1.0 / m), mode="A")
    if mode != "B":
        raise ScoringError(f"unknown weighting mode {mode!r}")
    if tau <= 0:
        raise ScoringError("tau must be > 0 in mode B")
    if target_centroid is None:
        raise ScoringError("mode B needs the target centroid")
    d = 1.0 - training_centroids @ np.asarray(target_centroid, dtype=np.float64)
    logits = -d / tau
    logits -= logits.max()
    w = np.exp(logits)
    w /= w.sum()
    return ProjectWeights(w=w, mode="B")


def psi_points(
    art: CorpusArtifacts,
    target_matrix: np.ndarray,
    epsilon: float,
    weights: ProjectWeights | None = None,
) -> np.ndarray:
    """Clipped coverage z-score for every corpus point against the target.

    Points whose baseline rests on fewer than two projects score 0: there
    is no meaningful spread to normalise against.
    """
    if target_matrix.shape[0] == 0:
        raise ScoringError("cannot score an empty target")
    w = weights.w if weights is not None else art.uniform_weights()
    phi_star = phi_to_set(art.corpus_matrix, target_matrix, art.k)
    phi0, sigma, available = art.point_baselines(w)
    z = np.zeros(art.n_points)
    ok = available
    z[ok] = (phi_star[ok] - phi0[ok]) / (sigma[ok] + epsilon)
    return np.asarray(clip_score(z))


def psi_point(
    art: CorpusArtifacts,
    x_index: int,
    target_matrix: np.ndarray,
    epsilon: float = 1e-6,
    weights: ProjectWeights | None = None,
) -> float:
    """Single-point convenience wrapper over psi_points."""
    return float(psi_points(art, target_matrix, epsilon, weights)[x_index])


def psi_type_scores(
    art: CorpusArtifacts,
    target_matrix: np.ndarray,
    epsilon: float,
    weights: ProjectWeights | None = None,
) -> tuple[np.ndarray, dict[int, str]]:
    """Type-restricted coverage z-scores and per-type flags.

    The target's type membership comes from hard assignment, never labels.
    A type the target lacks entirely gets the maximal cosine distance 2,
    which typically drives the score into the +5 clip. Types with no corpus
    reference points, or baselines from fewer than two usable projects,
    score 0 and are flagged.
    """
    k_t = art.k_t
    scores = np.zeros(k_t)
    flags: dict[int, str] = {}
    target_types = hard_assign_all(target_matrix, art.centroids)
    d_bar, d_sigma, available = art.type_distance_baselines(
        weights.w if weights is not None else art.uniform_weights()
    )
    for t in range(k_t):
        ref_rows = np.flatnonzero(art.corpus_type_idx == t)
        if len(ref_rows) == 0:
            flags[t] = "no corpus reference points"
            continue
        if not available[t]:
            flags[t] = "fewer than 2 usable baseline projects"
            continue
        member = target_matrix[target_types == t]
        if member.shape[0] == 0:
            d_t = 2.0
        else:
            d = 1.0 - art.corpus_matrix[ref_rows] @ member.T
            d_t = float(d.min(axis=1).mean())
        scores[t] = clip_score((d_t - d_bar[t]) / (d_sigma[t] + epsilon))
    return scores, flags


def psi_pop_scores(
    art: CorpusArtifacts,
    target_matrix: np.ndarray,
    epsilon: float,
    weights: ProjectWeights | None = None,
) -> tuple[np.ndarray, dict[int, str]]:
    """Population-deficit z-scores from Gibbs soft counts (annotation-free)."""
    w = weights.w if weights is not None else art.uniform_weights()
    n_bar, n_sigma, available = art.type_count_baselines(w)
    if target_matrix.shape[0] == 0:
        counts = np.zeros(art.k_t)
    else:
        counts = soft_assign_all(target_matrix, art.centroids, art.temperature).sum(axis=0)
    scores = np.zeros(art.k_t)
    flags: dict[int, str] = {}
    for t in range(art.k_t):
        if not available[t]:
            flags[t] = "fewer than 2 usable baseline projects"
            continue
        scores[t] = clip_score((n_bar[t] - counts[t]) / (n_sigma[t] + epsilon))
    return scores, flags


def soft_counts(target_matrix: np.ndarray, centroids: TypeCentroids,
                temperature: float) -> np.ndarray:
    """Per-type Gibbs soft count of a point set."""
    if target_matrix.shape[0] == 0:
        return np.zeros(centroids.taxonomy.k_t)
    return soft_assign_all(target_matrix, centroids, temperature).sum(axis=0)


def cell_aggregate(
    per_point_psi: np.ndarray, art: CorpusArtifacts
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Soft-weighted per-cell mean of the per-point scores.

    Returns (psi_cell, psi_geo, cell_mass). cell_mass[t, s] is the corpus
    soft topic mass of hard-type-t points in topic s; it doubles as the
    weight when marginalising cells back to a per-type geometric score.
    Empty cells (and types with no corpus points) stay at 0.
    """
    k_t, k_s = art.k_t, art.k_s
    psi_cell = np.zeros((k_t, k_s))
    mass = np.zeros((k_t, k_s))
    for t in range(k_t):
        rows = np.flatnonzero(art.corpus_hard_type == t)
        if len(rows) == 0:
            continue
        pi = art.corpus_topics[rows]
        mass[t] = pi.sum(axis=0)
        weighted = (pi * per_point_psi[rows, None]).sum(axis=0)
        nonzero = mass[t] > 0
        psi_cell[t, nonzero] = weighted[nonzero] / mass[t, nonzero]
    row_mass = mass.sum(axis=1)
    psi_geo = np.zeros(k_t)
    ok = row_mass > 0
    psi_geo[ok] = (mass[ok] * psi_cell[ok]).sum(axis=1) / row_mass[ok]
    return psi_cell, psi_geo, mass


def occupancy(
    art: CorpusArtifacts, target_matrix: np.ndarray, target_topics: np.ndarray
) -> np.ndarray:
    """Target soft mass per (hard type, topic) cell; sums to the target size."""
    grid = np.zeros((art.k_t, art.k_s))
    if target_matrix.shape[0] == 0:
        return grid
    if target_topics.shape != (target_matrix.shape[0], art.k_s):
        raise ScoringError(
            f"target topics have shape {target_topics.shape}, expected "
            f"({target_matrix.shape[0]}, {art.k_s})"
        )
    hard = hard_assign_all(target_matrix, art.centroids)
    for t in range(art.k_t):
        rows = hard == t
        if rows.any():
            grid[t] = target_topics[rows].sum(axis=0)
    return grid


def fuse(
    psi_geo: np.ndarray, psi_type: np.ndarray, psi_pop: np.ndarray,
    beta: float, gamma: float,
) -> np.ndarray:
    """Convex fusion of the three component scores; never re-clipped."""
    if not (0.0 <= beta <= 1.0):
        raise ScoringError(f"beta must be in [0, 1], got {beta}")
    if not (0.0 <= gamma <= 1.0):
        raise ScoringError(f"gamma must be in [0, 1], got {gamma}")
    psi_geo = np.asarray(psi_geo, dtype=np.float64)
    if psi_geo.shape != np.shape(psi_type) or psi_geo.shape != np.shape(psi_pop):
        raise ScoringError("component score vectors must have matching shapes")
    return (1.0 - gamma) * (beta * psi_geo + (1.0 - beta) * np.asarray(psi_type)) \
        + gamma * np.asarray(psi_pop)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def target_topic_matrix(art: CorpusArtifacts, target: Target) -> np.ndarray:
    """Topic rows for the target: given explicitly or via the fallback model."""
    if target.topics is not None:
        return np.asarray(target.topics, dtype=np.float64)
    tm = art.topic_model
    if not tm.is_fallback:
        raise ScoringError(
            "artifact topics were ingested externally; supply topic rows for the target"
        )
    logits = -(1.0 - target.matrix @ tm.centroids.T) / tm.temperature
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def score_project(art: CorpusArtifacts, target: Target, config: ScoreConfig) -> GapResult:
    """Run the full scoring pipeline for one target project."""
    if len(target) == 0:
        raise ScoringError("cannot score an empty target")
    if config.k != art.k:
        raise ScoringError(
            f"config k={config.k} but artifacts were fitted with k={art.k}; rebuild"
        )
    if target.matrix.shape[1] != art.dim:
        raise ScoringError(
            f"target dimension {target.matrix.shape[1]} != corpus dimension {art.dim}"
        )

    if config.mode == "B":
        centroid = target.matrix.mean(axis=0)
        centroid = centroid / np.linalg.norm(centroid)
        weights = project_weights("B", centroid, art.project_centroids, config.tau)
    else:
        weights = project_weights("A", None, art.project_centroids)

    per_point = psi_points(art, target.matrix, config.epsilon, weights)
    psi_cell, psi_geo, cell_mass = cell_aggregate(per_point, art)
    psi_type, type_flags = psi_type_scores(art, target.matrix, config.epsilon, weights)
    psi_pop, pop_flags = psi_pop_scores(art, target.matrix, config.epsilon, weights)

    flags: dict[str, list[str]] = {}
    names = art.taxonomy.type_names
    for t, reason in type_flags.items():
        flags.setdefault(names[t], []).append(f"type score: {reason}")
    for t, reason in pop_flags.items():
        flags.setdefault(names[t], []).append(f"population score: {reason}")
    for t in range(art.k_t):
        if not np.any(art.corpus_hard_type == t):
            flags.setdefault(names[t], []).append("geometric score: no corpus cell mass")

    if config.excluded_types:
        for name in config.excluded_types:
            t = art.taxonomy.index(name)
            psi_geo[t] = psi_type[t] = psi_pop[t] = 0.0
            psi_cell[t, :] = 0.0
            flags.setdefault(name, []).append("excluded by configuration")

    fused = fuse(psi_geo, psi_type, psi_pop, config.beta, config.gamma)
    topics = target_topic_matrix(art, target)
    occ = occupancy(art, target.matrix, topics)

    return GapResult(
        type_names=names,
        topic_labels=art.topic_model.labels,
        psi_geo=psi_geo,
        psi_type=psi_type,
        psi_pop=psi_pop,
        psi_fused=fused,
        psi_cell=psi_cell,
        cell_mass=cell_mass,
        occupancy=occ,
        per_point_psi=per_point,
        flags=flags,
        config={
            "k": config.k, "beta": config.beta, "gamma": config.gamma,
            "epsilon": config.epsilon, "mode": config.mode,
            "tau": config.tau if config.mode == "B" else None,
        },
        n_target=len(target),
        fingerprint=art.fingerprint(),
    )
