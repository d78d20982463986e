from __future__ import annotations

import json

import numpy as np
import pytest

from geogap.embeddings import EmbeddingStore
from geogap.topics import (TopicFileError, fit_fallback_topics, ingest_topics,
                           save_topics, soft_topics)
from synthdata import clustered_corpus, random_unit_vectors, unit


def _write_topic_file(path, k_s, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"k_s": k_s, "labels": [f"t{i}" for i in range(k_s)]}) + "\n")
        for rid, pi in rows:
            fh.write(json.dumps({"id": rid, "pi": pi}) + "\n")


def test_ingest_accepts_valid_rows(tmp_path):
    f = tmp_path / "topics.jsonl"
    _write_topic_file(f, 3, [("a", [0.5, 0.5, 0.0]), ("b", [1.0, 0.0, 0.0])])
    model, dist = ingest_topics(f, ["a", "b"])
    assert model.k_s == 3
    assert not model.is_fallback
    np.testing.assert_allclose(dist.pi["a"], [0.5, 0.5, 0.0])


def test_ingest_rejects_bad_sum(tmp_path):
    f = tmp_path / "topics.jsonl"
    _write_topic_file(f, 2, [("a", [0.6, 0.3])])
    with pytest.raises(TopicFileError, match="'a'"):
        ingest_topics(f, ["a"])


def test_ingest_renormalises_within_tolerance(tmp_path):
    f = tmp_path / "topics.jsonl"
    _write_topic_file(f, 2, [("a", [0.7005, 0.3])])
    _, dist = ingest_topics(f, ["a"])
    assert dist.pi["a"].sum() == pytest.approx(1.0, abs=1e-12)


def test_ingest_missing_id_errors(tmp_path):
    f = tmp_path / "topics.jsonl"
    _write_topic_file(f, 2, [("a", [1.0, 0.0])])
    with pytest.raises(TopicFileError, match="'b'"):
        ingest_topics(f, ["a", "b"])


def test_ingest_negative_entry_errors(tmp_path):
    f = tmp_path / "topics.jsonl"
    _write_topic_file(f, 2, [("a", [1.1, -0.1])])
    with pytest.raises(TopicFileError, match="negative"):
        ingest_topics(f, ["a"])


def test_topic_file_round_trip(tmp_path):
    dataset, store = clustered_corpus(2, 2, 4, d=5, seed=1)
    ids = [r.id for r in dataset.requirements]
    tm = fit_fallback_topics(store, ids, k_s=3, seed=0, temperature=0.05)
    dist = soft_topics(store, ids, tm)
    f = tmp_path / "topics.jsonl"
    save_topics(f, dist, labels=tm.labels)
    _, back = ingest_topics(f, ids)
    for rid in ids:
        np.testing.assert_allclose(back.pi[rid], dist.pi[rid], atol=1e-12)


def test_fallback_single_topic_is_normalised_mean():
    mat = random_unit_vectors(6, 4, seed=2)
    ids = [f"v{i}" for i in range(6)]
    store = EmbeddingStore(ids, mat)
    tm = fit_fallback_topics(store, ids, k_s=1, seed=3, temperature=0.1)
    np.testing.assert_allclose(tm.centroids[0], unit(mat.mean(axis=0)), atol=1e-10)


def test_fallback_recovers_planted_partition():
    rng = np.random.default_rng(4)
    centre_a = unit(np.array([1.0, 0.0, 0.0, 0.0]))
    centre_b = unit(np.array([-1.0, 0.2, 0.0, 0.0]))
    rows, ids = [], []
    for i in range(12):
        base = centre_a if i < 6 else centre_b
        rows.append(unit(base + 0.05 * rng.normal(size=4)))
        ids.append(f"v{i:02d}")
    store = EmbeddingStore(ids, np.vstack(rows))
    tm = fit_fallback_topics(store, ids, k_s=2, seed=5, temperature=0.05)
    d = 1.0 - np.vstack(rows) @ tm.centroids.T
    assign = d.argmin(axis=1)
    assert len(set(assign[:6])) == 1
    assert len(set(assign[6:])) == 1
    assert assign[0] != assign[6]


def test_fallback_k_equals_n_gives_one_point_clusters():
    mat = random_unit_vectors(5, 4, seed=6)
    ids = [f"v{i}" for i in range(5)]
    store = EmbeddingStore(ids, mat)
    tm = fit_fallback_topics(store, ids, k_s=5, seed=7, temperature=0.1)
    d = 1.0 - mat @ tm.centroids.T
    assert np.allclose(sorted(d.min(axis=1)), 0.0, atol=1e-9)
    assert len(set(d.argmin(axis=1))) == 5


def test_fallback_k_too_large_errors():
    mat = random_unit_vectors(3, 4, seed=8)
    ids = [f"v{i}" for i in range(3)]
    store = EmbeddingStore(ids, mat)
    with pytest.raises(ValueError):
        fit_fallback_topics(store, ids, k_s=4, seed=0)


def test_fallback_deterministic_for_fixed_seed():
    dataset, store = clustered_corpus(2, 3, 5, d=6, seed=9)
    ids = [r.id for r in dataset.requirements]
    tm1 = fit_fallback_topics(store, ids, k_s=4, seed=42, temperature=0.1)
    tm2 = fit_fallback_topics(store, ids, k_s=4, seed=42, temperature=0.1)
    np.testing.assert_array_equal(tm1.centroids, tm2.centroids)


def test_soft_topics_point_at_centroid_with_tiny_temperature():
    dataset, store = clustered_corpus(1, 2, 6, d=5, seed=10, spread=0.4)
    ids = [r.id for r in dataset.requirements]
    tm = fit_fallback_topics(store, ids, k_s=2, seed=11, temperature=1e-6)
    dist = soft_topics(store, ids, tm)
    mat = store.submatrix(ids)
    nearest = (1.0 - mat @ tm.centroids.T).argmin(axis=1)
    for i, rid in enumerate(ids):
        assert dist.pi[rid][nearest[i]] >= 0.999


def test_soft_topics_equidistant_point_is_uniform():
    centroids = np.array([[1.0, 0.0], [0.0, 1.0]])
    store = EmbeddingStore(["x", "c0", "c1"],
                           np.vstack([unit(np.array([1.0, 1.0])), centroids]))
    from geogap.topics import TopicModel
    tm = TopicModel(k_s=2, labels=("a", "b"), centroids=centroids, temperature=0.2)
    dist = soft_topics(store, ["x"], tm)
    np.testing.assert_allclose(dist.pi["x"], [0.5, 0.5], atol=1e-12)


def test_soft_topics_two_topic_scalar_oracle():
    centroids = np.array([[1.0, 0.0], [0.0, 1.0]])
    x = np.array([0.9, 0.7])
    x = unit(x)
    from geogap.topics import TopicModel
    tm = TopicModel(k_s=2, labels=("a", "b"), centroids=centroids, temperature=0.1)
    store_mat = np.vstack([x, centroids])
    store = EmbeddingStore(["x", "c0", "c1"], store_mat)
    dist = soft_topics(store, ["x"], tm)
    d0, d1 = 1.0 - x[0], 1.0 - x[1]
    expected = np.exp(-d0 / 0.1) / (np.exp(-d0 / 0.1) + np.exp(-d1 / 0.1))
    assert dist.pi["x"][0] == pytest.approx(expected, abs=1e-12)


def test_every_row_positive_and_total_mass_counts_points():
    dataset, store = clustered_corpus(2, 3, 4, d=6, seed=12)
    ids = [r.id for r in dataset.requirements]
    tm = fit_fallback_topics(store, ids, k_s=3, seed=13, temperature=0.5)
    dist = soft_topics(store, ids, tm)
    for rid in ids:
        row = dist.pi[rid]
        assert abs(row.sum() - 1.0) <= 1e-9
        assert np.all(row > 0)
    assert dist.total_mass() == pytest.approx(len(ids), abs=1e-6)
