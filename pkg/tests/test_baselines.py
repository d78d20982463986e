from __future__ import annotations

import numpy as np
import pytest

from geogap.baselines import (BASELINES, baseline_centroid_distance,
                              baseline_classifier_count, baseline_gt_count,
                              baseline_mmd, baseline_random,
                              baseline_tfidf_knn, mmd_squared, tfidf_vectors)
from geogap.corpus import project_partition
from geogap.evaluation import FoldContext, InjectionSpec, run_type_level
from geogap.pipeline import build_artifacts, derive_seed
from geogap.scoring import ScoreConfig, ScoringError, Target, score_project
from synthdata import clustered_corpus, random_unit_vectors, unit

CFG = ScoreConfig(k=1, k_s=2, temperature=0.05)


def _fold_context(seed=1, target="proj0", depleted_types=()):
    dataset, store = clustered_corpus(4, 3, 5, d=6, seed=seed, spread=0.04)
    training_pids = [p for p in dataset.projects if p != target]
    art = build_artifacts(dataset, store, training_pids, CFG, seed=seed)
    partition = project_partition(dataset)
    full = partition[target]
    depleted = [r for r in full
                if dataset.taxonomy.index(r.type_label) not in depleted_types]
    pre = score_project(art, Target.from_store(store, [r.id for r in full]), CFG)
    return FoldContext(
        fold_index=0, target_pid=target, art=art, store=store, dataset=dataset,
        config=CFG, target_full=full, target_depleted=depleted,
        training={p: partition[p] for p in training_pids},
        fold_seed=derive_seed(7, 0), pre_result=pre,
    )


def test_random_baseline_reproducible():
    ctx = _fold_context()
    a = baseline_random(ctx)
    b = baseline_random(ctx)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3,)
    assert np.all((a >= 0) & (a <= 1))


def test_gt_count_symmetric_target_is_near_zero():
    ctx = _fold_context()
    scores = baseline_gt_count(ctx)
    np.testing.assert_allclose(scores, 0.0, atol=1.0)


def test_gt_count_depleted_type_scores_highest():
    ctx = _fold_context(depleted_types=(1,))
    scores = baseline_gt_count(ctx)
    assert int(np.argmax(scores)) == 1
    assert scores[1] > 100  # 5-count deficit against zero spread


def test_gt_count_empty_target_maximal_deficit():
    ctx = _fold_context(depleted_types=(0, 1, 2))
    scores = baseline_gt_count(ctx)
    assert np.all(scores > 100)


def test_classifier_count_matches_gt_on_separable_data():
    ctx = _fold_context(depleted_types=(2,))
    np.testing.assert_allclose(baseline_classifier_count(ctx),
                               baseline_gt_count(ctx), atol=1e-9)


def test_tfidf_identical_and_disjoint_documents():
    train, extra = tfidf_vectors(["alpha beta", "alpha beta", "gamma delta"])
    assert 1.0 - float(train[0] @ train[1]) == pytest.approx(0.0, abs=1e-12)
    assert 1.0 - float(train[0] @ train[2]) == pytest.approx(1.0, abs=1e-12)


def test_tfidf_matches_hand_computed_matrix():
    docs = ["alpha beta", "alpha gamma gamma", "delta"]
    train, _ = tfidf_vectors(docs)
    idf = {tok: np.log((1 + 3) / (1 + df)) + 1.0
           for tok, df in {"alpha": 2, "beta": 1, "gamma": 1, "delta": 1}.items()}
    d1 = np.array([idf["alpha"], idf["beta"], 0.0, 0.0])
    d2 = np.array([idf["alpha"], 0.0, (1 + np.log(2)) * idf["gamma"], 0.0])
    d3 = np.array([0.0, 0.0, 0.0, idf["delta"]])
    expected = np.vstack([d1 / np.linalg.norm(d1), d2 / np.linalg.norm(d2),
                          d3 / np.linalg.norm(d3)])
    np.testing.assert_allclose(train, expected, atol=1e-12)


def test_tfidf_empty_vocabulary_errors():
    with pytest.raises(ScoringError, match="vocabulary"):
        tfidf_vectors(["...", "!!"])


def test_tfidf_baseline_runs_and_flags_depleted_vocab_type():
    # texts mirror type labels, so TF-IDF space separates types cleanly
    ctx = _fold_context(depleted_types=(0,))
    for reqs in list(ctx.training.values()) + [ctx.target_depleted]:
        for i, r in enumerate(list(reqs)):
            reqs[i] = type(r)(r.id, f"token{r.type_label} filler{i % 3}",
                              r.project_id, r.type_label)
    scores = baseline_tfidf_knn(ctx)
    assert scores.shape == (3,)
    assert int(np.argmax(scores)) == 0


def test_mmd_identical_sets_small_and_symmetric():
    # the unbiased estimator dips slightly negative for identical samples
    x = random_unit_vectors(10, 5, seed=3)
    value = mmd_squared(x, x.copy())
    assert -0.25 <= value <= 0.0
    y = random_unit_vectors(8, 5, seed=4)
    assert mmd_squared(x, y) == pytest.approx(mmd_squared(y, x), abs=1e-12)


def test_mmd_separated_clusters_large():
    rng = np.random.default_rng(5)
    a = np.vstack([unit(np.eye(4)[0] + 0.02 * rng.normal(size=4)) for _ in range(8)])
    b = np.vstack([unit(np.eye(4)[2] + 0.02 * rng.normal(size=4)) for _ in range(8)])
    assert mmd_squared(a, b) > 0.5


def test_mmd_small_sides_error_and_baseline_flags_zero():
    x = random_unit_vectors(5, 4, seed=6)
    with pytest.raises(ScoringError):
        mmd_squared(x, x[:1])
    ctx = _fold_context(depleted_types=(1,))
    scores = baseline_mmd(ctx)
    assert scores[1] == 0.0          # no target points of the depleted type
    assert np.all(np.isfinite(scores))


def test_centroid_distance_target_equals_corpus_types():
    ctx = _fold_context()
    scores = baseline_centroid_distance(ctx)
    assert np.all(scores < 0.05)


def test_centroid_distance_absent_type_is_two():
    ctx = _fold_context(depleted_types=(2,))
    scores = baseline_centroid_distance(ctx)
    assert scores[2] == 2.0


def test_centroid_distance_two_point_hand_arithmetic():
    ctx = _fold_context()
    art = ctx.art
    # replace the depleted target with two known vectors of type 0
    mu0 = art.centroids.mu[0]
    ids = [r.id for r in ctx.target_depleted[:2]]
    scores = baseline_centroid_distance(ctx)
    members = ctx.store.submatrix([r.id for r in ctx.target_depleted])
    from geogap.prototypes import hard_assign_all
    hard = hard_assign_all(members, art.centroids)
    mean = members[hard == 0].mean(axis=0)
    expected = 1.0 - float(mean / np.linalg.norm(mean) @ mu0)
    assert scores[0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("name", sorted(BASELINES))
def test_every_baseline_plugs_into_the_harness(name):
    dataset, store = clustered_corpus(4, 3, 5, d=6, seed=8, spread=0.04)
    spec = InjectionSpec(fraction=1.0, n_targets=1, seed=13)
    # texts carry the type token so the TF-IDF space is separable too
    reqs = [type(r)(r.id, f"needs {r.type_label} handling case{i % 4}",
                    r.project_id, r.type_label)
            for i, r in enumerate(dataset.requirements)]
    dataset = type(dataset)(reqs, dataset.taxonomy)
    result = run_type_level(dataset, store, CFG, spec, scorer=BASELINES[name])
    assert result.aggregate["n_scored"] == 4
    assert result.aggregate["auroc_mean"] is not None
    if name in ("gt-count", "classifier-count"):
        assert result.aggregate["auroc_mean"] == 1.0


def test_baselines_share_identical_injections():
    dataset, store = clustered_corpus(4, 3, 5, d=6, seed=9, spread=0.04)
    spec = InjectionSpec(fraction=1.0, n_targets=1, seed=17)
    a = run_type_level(dataset, store, CFG, spec, scorer=BASELINES["random"])
    b = run_type_level(dataset, store, CFG, spec, scorer=BASELINES["gt-count"])
    assert [r.injected for r in a.records] == [r.injected for r in b.records]
    assert [r.n_after for r in a.records] == [r.n_after for r in b.records]
