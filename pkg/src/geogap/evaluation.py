"""Synthetic gap-injection evaluation: LOO folds, AUROC/MRR, sweeps,
permutation significance, cell-level localisation, whole-project holdout.

Ground truth for gap detection does not exist, so every experiment plants
its own gaps: pick well-covered types in a leave-one-out target, delete
some fraction of their requirements, and check whether the detector ranks
the depleted types at the top. Type selection always uses the primary
detector's pre-injection scores, so alternative scorers (the baselines)
are evaluated on identical folds, seeds, and injections.
"""
from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .artifacts import CorpusArtifacts
from .corpus import Dataset, Requirement, loo_splits, project_partition
from .embeddings import EmbeddingStore
from .pipeline import build_artifacts, derive_seed
from .scoring import GapResult, ScoreConfig, Target, fuse, score_project
from .topics import TopicDistribution, TopicModel

LARGE_TARGET_THRESHOLD = 50


class EvalError(ValueError):
    """Degenerate metric input or invalid experiment specification."""


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (Mann-Whitney convention)."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    avg = (cum - counts + 1 + cum) / 2.0
    return avg[inverse]


def auroc(scores: Sequence[float], positives: Sequence[bool]) -> float:
    """Probability a random positive outscores a random negative; ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    if scores.shape != pos.shape:
        raise EvalError("scores and positives must have the same length")
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvalError("AUROC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def mrr(ranks: Sequence[int]) -> float:
    """Mean reciprocal rank."""
    if len(ranks) == 0:
        raise EvalError("mrr needs at least one rank")
    if any(r < 1 for r in ranks):
        raise EvalError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def descending_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based rank of each entry when sorted descending; ties break by index."""
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores, dtype=np.float64)))
    ranks = np.empty(len(scores), dtype=int)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


# ---------------------------------------------------------------------------
# Injection protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InjectionSpec:
    """What to deplete: how many types (or cells), what fraction, which seed."""

    fraction: float = 1.0
    n_targets: int = 3
    seed: int = 0
    min_count: int = 3

    def __post_init__(self) -> None:
        if not (0.0 < self.fraction <= 1.0):
            raise EvalError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.n_targets < 1:
            raise EvalError("n_targets must be >= 1")


@dataclass
class EvalRecord:
    """One LOO fold's injection outcome."""

    target: str
    skipped: str | None = None
    injected: tuple[int, ...] = ()
    pre_scores: list[float] = field(default_factory=list)
    post_scores: list[float] = field(default_factory=list)
    auroc: float | None = None
    reciprocal_ranks: tuple[float, ...] = ()
    n_before: int = 0
    n_after: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "skipped": self.skipped,
            "injected": list(self.injected),
            "pre_scores": self.pre_scores,
            "post_scores": self.post_scores,
            "auroc": self.auroc,
            "reciprocal_ranks": list(self.reciprocal_ranks),
            "n_before": self.n_before,
            "n_after": self.n_after,
            "extra": self.extra,
        }


@dataclass
class FoldContext:
    """Everything a scorer may need for one fold."""

    fold_index: int
    target_pid: str
    art: CorpusArtifacts
    store: EmbeddingStore
    dataset: Dataset
    config: ScoreConfig
    target_full: list[Requirement]
    target_depleted: list[Requirement]
    training: dict[str, list[Requirement]]
    fold_seed: int
    pre_result: GapResult
    topics: TopicDistribution | None = None


Scorer = Callable[[FoldContext], np.ndarray]


def fused_scorer(ctx: FoldContext) -> np.ndarray:
    """The primary detector: fused per-type scores on the depleted target."""
    target = Target.from_store(ctx.store, [r.id for r in ctx.target_depleted],
                               topics=ctx.topics)
    return score_project(ctx.art, target, ctx.config).psi_fused


def select_covered_types(
    target: Sequence[Requirement],
    art: CorpusArtifacts,
    spec: InjectionSpec,
    pre_fused: np.ndarray,
) -> list[int]:
    """Pick up to n_targets well-covered types to deplete.

    Eligible types have at least min_count labelled target requirements and
    appear in at least two training projects. Among those, the lowest
    pre-injection fused scores win (lowest score = best covered); ties
    break by larger target count, then taxonomy order.
    """
    if len(target) == 0:
        raise EvalError("cannot select injection types for an empty target")
    tax = art.taxonomy
    counts = np.zeros(tax.k_t, dtype=int)
    for r in target:
        if r.type_label is not None:
            counts[tax.index(r.type_label)] += 1
    project_support = art.type_presence.sum(axis=1)
    eligible = [
        t for t in range(tax.k_t)
        if counts[t] >= spec.min_count and project_support[t] >= 2
    ]
    eligible.sort(key=lambda t: (pre_fused[t], -counts[t], t))
    return eligible[: spec.n_targets]


def inject(
    target: Sequence[Requirement],
    types: Sequence[int],
    fraction: float,
    seed: int,
    taxonomy_index: Callable[[str], int],
) -> list[Requirement]:
    """Remove ceil(fraction * n_t) seeded-random requirements of each type.

    Removal uses ground-truth labels (they exist in evaluation data). Each
    type draws from its own seeded stream, so removal sets are nested
    across fractions for a fixed seed.
    """
    drop: set[str] = set()
    for t in types:
        members = [r for r in target
                   if r.type_label is not None and taxonomy_index(r.type_label) == t]
        n_remove = math.ceil(fraction * len(members))
        order = np.random.default_rng([seed, int(t)]).permutation(len(members))
        drop.update(members[i].id for i in order[:n_remove])
    return [r for r in target if r.id not in drop]


# ---------------------------------------------------------------------------
# Type-level experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    records: list[EvalRecord]
    aggregate: dict


def _aggregate_records(records: list[EvalRecord], threshold: int) -> dict:
    scored = [r for r in records if r.skipped is None]
    large = [r for r in scored if r.n_before >= threshold]
    rr = [x for r in scored for x in r.reciprocal_ranks]

    def _stats(rs: list[EvalRecord]) -> tuple[float | None, float | None]:
        if not rs:
            return None, None
        vals = np.array([r.auroc for r in rs])
        return float(vals.mean()), float(vals.std())

    mean_all, sd_all = _stats(scored)
    mean_large, sd_large = _stats(large)
    return {
        "auroc_mean": mean_all,
        "auroc_sd": sd_all,
        "auroc_mean_large": mean_large,
        "auroc_sd_large": sd_large,
        "mrr": float(np.mean(rr)) if rr else None,
        "n_folds": len(records),
        "n_scored": len(scored),
        "n_skipped": len(records) - len(scored),
        "large_threshold": threshold,
    }


def _parallel_folds(fold_fn: Callable[[int], EvalRecord], n: int, jobs: int) -> list[EvalRecord]:
    """Run folds, optionally in a bounded thread pool, in fold order."""
    if jobs <= 1 or n <= 1:
        return [fold_fn(i) for i in range(n)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fold_fn, range(n)))


def run_type_level(
    dataset: Dataset,
    store: EmbeddingStore,
    config: ScoreConfig,
    spec: InjectionSpec,
    scorer: Scorer | None = None,
    topics: tuple[TopicModel, TopicDistribution] | None = None,
    jobs: int = 1,
) -> ExperimentResult:
    """LOO gap injection at type level.

    Folds where no type is eligible are recorded as skipped, not fatal.
    AUROC per fold treats the injected types as positives among all types;
    reciprocal ranks come from the descending post-injection ranking.
    Folds are independent, so jobs > 1 runs them in a thread pool; records
    are always reduced in fold order.
    """
    scorer = scorer or fused_scorer
    partition = project_partition(dataset)
    splits = loo_splits(dataset)

    def run_fold(fold_index: int) -> EvalRecord:
        target_pid, training_pids = splits[fold_index]
        target_full = partition[target_pid]
        fold_seed = derive_seed(spec.seed, fold_index)
        art = build_artifacts(dataset, store, training_pids, config,
                              seed=fold_seed, topics=topics)
        dist = topics[1] if topics is not None else None
        pre_target = Target.from_store(store, [r.id for r in target_full], topics=dist)
        pre_result = score_project(art, pre_target, config)

        chosen = select_covered_types(target_full, art, spec, pre_result.psi_fused)
        if not chosen:
            return EvalRecord(target=target_pid, skipped="no eligible types",
                              n_before=len(target_full))
        depleted = inject(target_full, chosen, spec.fraction, fold_seed,
                          art.taxonomy.index)
        if not depleted:
            return EvalRecord(target=target_pid,
                              skipped="target empty after injection",
                              injected=tuple(chosen),
                              n_before=len(target_full))

        ctx = FoldContext(
            fold_index=fold_index, target_pid=target_pid, art=art, store=store,
            dataset=dataset, config=config, target_full=list(target_full),
            target_depleted=depleted, fold_seed=fold_seed,
            training={p: list(partition[p]) for p in training_pids},
            pre_result=pre_result, topics=dist,
        )
        post = np.asarray(scorer(ctx), dtype=np.float64)
        positives = np.zeros(art.k_t, dtype=bool)
        positives[list(chosen)] = True
        ranks = descending_ranks(post)
        return EvalRecord(
            target=target_pid,
            injected=tuple(chosen),
            pre_scores=[float(x) for x in pre_result.psi_fused],
            post_scores=[float(x) for x in post],
            auroc=auroc(post, positives),
            reciprocal_ranks=tuple(1.0 / ranks[t] for t in chosen),
            n_before=len(target_full),
            n_after=len(depleted),
        )

    records = _parallel_folds(run_fold, len(splits), jobs)
    return ExperimentResult(records, _aggregate_records(records, LARGE_TARGET_THRESHOLD))


def run_fraction_sweep(
    dataset: Dataset,
    store: EmbeddingStore,
    config: ScoreConfig,
    spec: InjectionSpec,
    fractions: Sequence[float] = (1.0, 0.75, 0.5),
    scorer: Scorer | None = None,
    topics: tuple[TopicModel, TopicDistribution] | None = None,
    jobs: int = 1,
) -> dict[float, ExperimentResult]:
    """run_type_level at each removal fraction, sharing the root seed."""
    out: dict[float, ExperimentResult] = {}
    for f in fractions:
        out[f] = run_type_level(
            dataset, store, config,
            InjectionSpec(fraction=f, n_targets=spec.n_targets, seed=spec.seed,
                          min_count=spec.min_count),
            scorer=scorer, topics=topics, jobs=jobs,
        )
    return out


def run_k_sweep(
    dataset: Dataset,
    store: EmbeddingStore,
    config: ScoreConfig,
    spec: InjectionSpec,
    ks: Sequence[int] = (1, 3, 5, 10, 20),
    scorer: Scorer | None = None,
    topics: tuple[TopicModel, TopicDistribution] | None = None,
    jobs: int = 1,
) -> dict[int, ExperimentResult]:
    """run_type_level at each neighbourhood size, sharing the root seed."""
    out: dict[int, ExperimentResult] = {}
    for k in ks:
        out[k] = run_type_level(dataset, store, replace(config, k=k), spec,
                                scorer=scorer, topics=topics, jobs=jobs)
    return out


# ---------------------------------------------------------------------------
# Permutation significance
# ---------------------------------------------------------------------------


def permutation_test(
    scores_per_project: Mapping[str, Sequence[float]],
    n_perm: int = 1000,
    n_targets: int = 3,
    seed: int = 0,
    observed: Mapping[str, float] | None = None,
) -> dict[str, dict]:
    """Null AUROC distribution from random target labelling, per project.

    For each project, label n_targets random types positive (no removal)
    and compute the AUROC of the project's actual scores against those
    labels. A project is significant when its observed injection AUROC
    exceeds the null 95th percentile.
    """
    if n_perm < 100:
        raise EvalError("n_perm must be >= 100")
    out: dict[str, dict] = {}
    for pid, raw in scores_per_project.items():
        scores = np.asarray(raw, dtype=np.float64)
        if n_targets >= len(scores):
            raise EvalError(f"n_targets={n_targets} must be < {len(scores)} types")
        rng = np.random.default_rng([seed, zlib.crc32(str(pid).encode())])
        nulls = np.empty(n_perm)
        for i in range(n_perm):
            mask = np.zeros(len(scores), dtype=bool)
            mask[rng.choice(len(scores), size=n_targets, replace=False)] = True
            nulls[i] = auroc(scores, mask)
        p95 = float(np.quantile(nulls, 0.95))
        obs = None if observed is None else observed.get(pid)
        out[pid] = {
            "null_p95": p95,
            "observed": obs,
            "significant": None if obs is None else bool(obs > p95),
        }
    return out


# ---------------------------------------------------------------------------
# Cell-level experiment
# ---------------------------------------------------------------------------


def fused_cell_grid(result: GapResult, beta: float, gamma: float) -> np.ndarray:
    """Cell-resolution fusion: type-level scores broadcast across topics."""
    return fuse(
        result.psi_cell,
        np.repeat(result.psi_type[:, None], result.psi_cell.shape[1], axis=1),
        np.repeat(result.psi_pop[:, None], result.psi_cell.shape[1], axis=1),
        beta, gamma,
    )


def _cell_membership(art: CorpusArtifacts, store: EmbeddingStore,
                     reqs: Sequence[Requirement],
                     dist: TopicDistribution | None) -> list[tuple[int, int]]:
    from .prototypes import hard_assign_all
    from .scoring import target_topic_matrix

    target = Target.from_store(store, [r.id for r in reqs], topics=dist)
    hard = hard_assign_all(target.matrix, art.centroids)
    pi = target_topic_matrix(art, target)
    return [(int(h), int(s)) for h, s in zip(hard, pi.argmax(axis=1))]


def run_cell_level(
    dataset: Dataset,
    store: EmbeddingStore,
    config: ScoreConfig,
    spec: InjectionSpec,
    n_cells: int = 5,
    topics: tuple[TopicModel, TopicDistribution] | None = None,
) -> ExperimentResult:
    """Gap injection on the (type x topic) grid.

    Membership of a requirement in a cell is (hard type, argmax topic).
    Only cells with corpus mass are scored; injected cells are positives.
    """
    partition = project_partition(dataset)
    records: list[EvalRecord] = []
    for fold_index, (target_pid, training_pids) in enumerate(loo_splits(dataset)):
        target_full = partition[target_pid]
        fold_seed = derive_seed(spec.seed, fold_index)
        art = build_artifacts(dataset, store, training_pids, config,
                              seed=fold_seed, topics=topics)
        dist = topics[1] if topics is not None else None
        pre_target = Target.from_store(store, [r.id for r in target_full], topics=dist)
        pre_result = score_project(art, pre_target, config)
        pre_grid = fused_cell_grid(pre_result, config.beta, config.gamma)

        member = _cell_membership(art, store, target_full, dist)
        cell_counts: dict[tuple[int, int], int] = {}
        for cell in member:
            cell_counts[cell] = cell_counts.get(cell, 0) + 1
        eligible = [
            cell for cell, cnt in cell_counts.items()
            if cnt >= spec.min_count and pre_result.cell_mass[cell] > 0
        ]
        eligible.sort(key=lambda c: (pre_grid[c], -cell_counts[c], c))
        chosen = eligible[:n_cells]
        if not chosen:
            records.append(EvalRecord(target=target_pid, skipped="no eligible cells",
                                      n_before=len(target_full)))
            continue

        rng_drop: set[str] = set()
        for cell in chosen:
            members = [r for r, c in zip(target_full, member) if c == cell]
            n_remove = math.ceil(spec.fraction * len(members))
            order = np.random.default_rng(
                [fold_seed, int(cell[0]), int(cell[1])]).permutation(len(members))
            rng_drop.update(members[i].id for i in order[:n_remove])
        depleted = [r for r in target_full if r.id not in rng_drop]
        if not depleted:
            records.append(EvalRecord(target=target_pid,
                                      skipped="target empty after injection",
                                      n_before=len(target_full)))
            continue

        post_result = score_project(
            art, Target.from_store(store, [r.id for r in depleted], topics=dist),
            config)
        post_grid = fused_cell_grid(post_result, config.beta, config.gamma)
        scored_cells = np.argwhere(post_result.cell_mass > 0)
        scores = np.array([post_grid[t, s] for t, s in scored_cells])
        positives = np.array([(int(t), int(s)) in set(chosen) for t, s in scored_cells])
        if positives.all() or not positives.any():
            records.append(EvalRecord(target=target_pid,
                                      skipped="degenerate cell labels",
                                      n_before=len(target_full)))
            continue
        flat = [int(t * art.k_s + s) for t, s in chosen]
        records.append(EvalRecord(
            target=target_pid,
            injected=tuple(flat),
            auroc=auroc(scores, positives),
            n_before=len(target_full),
            n_after=len(depleted),
            extra={
                "n_cells_scored": int(len(scores)),
                "cells": [[int(t), int(s)] for t, s in chosen],
            },
        ))
    return ExperimentResult(records, _aggregate_records(records, LARGE_TARGET_THRESHOLD))


# ---------------------------------------------------------------------------
# Whole-project holdout
# ---------------------------------------------------------------------------


def run_holdout(
    dataset: Dataset,
    store: EmbeddingStore,
    config: ScoreConfig,
    mass_threshold: float = 0.2,
) -> dict:
    """Corpus-sensitivity probe: does removing a whole project create gaps?

    For every held-out project j and every other target k, the positives
    are the types where j contributes more than mass_threshold of the
    remaining corpus's labelled mass. Pairs with no positive (or no
    negative) type are invalid and skipped.
    """
    if len(dataset.projects) < 3:
        raise EvalError("holdout needs at least 3 projects")
    if dataset.taxonomy is None:
        raise EvalError("holdout needs a labelled dataset")
    partition = project_partition(dataset)
    tax = dataset.taxonomy
    counts: dict[str, np.ndarray] = {}
    for pid, reqs in partition.items():
        c = np.zeros(tax.k_t)
        for r in reqs:
            if r.type_label is not None:
                c[tax.index(r.type_label)] += 1
        counts[pid] = c

    pairs = []
    aurocs = []
    for held in dataset.projects:
        for target_pid in dataset.projects:
            if target_pid == held:
                continue
            training = [p for p in dataset.projects if p not in (held, target_pid)]
            if len(training) < 2:
                pairs.append({"held": held, "target": target_pid,
                              "valid": False, "reason": "too few training projects"})
                continue
            pool = counts[held].copy()
            for p in training:
                pool += counts[p]
            with np.errstate(invalid="ignore"):
                share = np.where(pool > 0, counts[held] / np.maximum(pool, 1e-12), 0.0)
            positives = share > mass_threshold
            if not positives.any() or positives.all():
                pairs.append({"held": held, "target": target_pid,
                              "valid": False, "reason": "no positive/negative types"})
                continue
            art = build_artifacts(dataset, store, training, config,
                                  seed=derive_seed(0, zlib.crc32(held.encode())))
            result = score_project(
                art, Target.from_store(store, [r.id for r in partition[target_pid]]),
                config)
            a = auroc(result.psi_fused, positives)
            aurocs.append(a)
            pairs.append({"held": held, "target": target_pid, "valid": True,
                          "auroc": a,
                          "positives": [tax.type_names[t]
                                        for t in np.flatnonzero(positives)]})
    return {
        "pairs": pairs,
        "n_valid_pairs": len(aurocs),
        "auroc_mean": float(np.mean(aurocs)) if aurocs else None,
    }


# ---------------------------------------------------------------------------
# Result export
# ---------------------------------------------------------------------------


def write_records_jsonl(records: Sequence[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


def write_summary_json(aggregate: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_records_csv(records: Sequence[EvalRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "skipped", "injected", "auroc",
                         "reciprocal_ranks", "n_before", "n_after"])
        for r in records:
            writer.writerow([
                r.target, r.skipped or "",
                ";".join(str(t) for t in r.injected),
                "" if r.auroc is None else f"{r.auroc:.6f}",
                ";".join(f"{x:.6f}" for x in r.reciprocal_ranks),
                r.n_before, r.n_after,
            ])
