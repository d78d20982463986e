"""End-to-end corpus fitting: centroids, temperature, topics, baselines."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .artifacts import CorpusArtifacts
from .corpus import Dataset, project_partition
from .embeddings import EmbeddingStore
from .prototypes import calibrate_temperature, compute_centroids, hard_accuracy
from .scoring import ScoreConfig, ScoringError, fit_baselines
from .topics import TopicDistribution, TopicModel, fit_fallback_topics, soft_topics


def derive_seed(root: int, *parts: int) -> int:
    """Stable child seed from a root seed and integer stream labels."""
    return int(np.random.SeedSequence([int(root), *[int(p) for p in parts]]).generate_state(1)[0])


def build_artifacts(
    dataset: Dataset,
    store: EmbeddingStore,
    training_projects: Sequence[str],
    config: ScoreConfig,
    seed: int = 0,
    topics: tuple[TopicModel, TopicDistribution] | None = None,
) -> CorpusArtifacts:
    """Fit the full reference-corpus state on the given training projects.

    The Gibbs temperature is calibrated so the mean winning soft probability
    matches the hard-assignment accuracy measured on the same projects,
    unless the config pins an explicit temperature or target confidence.
    Topic distributions come from the supplied ingested pair when present,
    otherwise from the spherical-clustering fallback fitted on the training
    points only, with the calibrated temperature.
    """
    if dataset.taxonomy is None:
        raise ScoringError("corpus dataset has no taxonomy (no labels found)")
    partition = project_partition(dataset)
    for pid in training_projects:
        if pid not in partition:
            raise ScoringError(f"unknown training project {pid!r}")
    training = {pid: [r.id for r in partition[pid]] for pid in training_projects}
    labelled = [r for pid in training_projects for r in partition[pid]]
    unlabelled = [r.id for r in labelled if r.type_label is None]
    if unlabelled:
        raise ScoringError(
            f"corpus requirement {unlabelled[0]!r} has no type label "
            f"({len(unlabelled)} unlabelled in total)"
        )

    centroids = compute_centroids(store, labelled, dataset.taxonomy)

    if config.temperature is not None:
        temperature = config.temperature
    else:
        accuracy, _ = hard_accuracy(store, labelled, centroids)
        n_present = int(centroids.present.sum())
        target = config.target_confidence
        if target is None:
            target = min(max(accuracy, 1.0 / n_present + 1e-3), 1.0 - 1e-6)
        temperature = calibrate_temperature(store, labelled, centroids, target)

    if topics is not None:
        topic_model, distribution = topics
    else:
        all_ids = [r.id for r in labelled]
        topic_model = fit_fallback_topics(
            store, all_ids, min(config.k_s, len(all_ids)),
            seed=derive_seed(seed, 1), temperature=temperature,
        )
        distribution = soft_topics(store, all_ids, topic_model)

    labels = {r.id: r.type_label for r in labelled}
    return fit_baselines(
        training, config.k, store, dataset.taxonomy, centroids, temperature,
        distribution, labels, topic_model,
    )
