from __future__ import annotations

import numpy as np
import pytest

from geogap.artifacts import ArtifactError, load_artifacts, save_artifacts
from geogap.pipeline import build_artifacts
from geogap.scoring import ScoreConfig, Target, score_project
from synthdata import clustered_corpus


def _fit(seed=0, k=1):
    dataset, store = clustered_corpus(3, 3, 4, d=6, seed=seed)
    config = ScoreConfig(k=k, k_s=2, temperature=0.05)
    art = build_artifacts(dataset, store, list(dataset.projects), config, seed=seed)
    return dataset, store, art, config


def test_round_trip_is_bit_exact(tmp_path):
    dataset, store, art, config = _fit()
    path = tmp_path / "corpus.ggz"
    save_artifacts(art, path)
    back = load_artifacts(path)
    np.testing.assert_array_equal(back.corpus_matrix, art.corpus_matrix)
    np.testing.assert_array_equal(back.phi_pp, art.phi_pp)
    np.testing.assert_array_equal(back.d_t_pj, art.d_t_pj)
    np.testing.assert_array_equal(back.n_t_pj, art.n_t_pj)
    np.testing.assert_array_equal(back.corpus_topics, art.corpus_topics)
    np.testing.assert_array_equal(back.centroids.mu, art.centroids.mu)
    np.testing.assert_array_equal(back.topic_model.centroids,
                                  art.topic_model.centroids)
    assert back.corpus_ids == art.corpus_ids
    assert back.projects == art.projects
    assert back.taxonomy.type_names == art.taxonomy.type_names
    assert back.k == art.k
    assert back.temperature == art.temperature
    assert back.topic_model.temperature == art.topic_model.temperature


def test_reloaded_artifacts_score_identically(tmp_path):
    dataset, store, art, config = _fit(seed=1)
    path = tmp_path / "corpus.ggz"
    save_artifacts(art, path)
    back = load_artifacts(path)
    ids = [r.id for r in dataset.requirements if r.project_id == "proj0"]
    target = Target.from_store(store, ids)
    a = score_project(art, target, config)
    b = score_project(back, target, config)
    np.testing.assert_array_equal(a.psi_fused, b.psi_fused)
    np.testing.assert_array_equal(a.psi_cell, b.psi_cell)
    np.testing.assert_array_equal(a.occupancy, b.occupancy)


def test_save_is_deterministic(tmp_path):
    _, _, art, _ = _fit(seed=2)
    p1, p2 = tmp_path / "a.ggz", tmp_path / "b.ggz"
    save_artifacts(art, p1)
    save_artifacts(art, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_rebuild_from_same_inputs_is_byte_identical(tmp_path):
    dataset, store, _, config = _fit(seed=3)
    art1 = build_artifacts(dataset, store, list(dataset.projects), config, seed=7)
    art2 = build_artifacts(dataset, store, list(dataset.projects), config, seed=7)
    p1, p2 = tmp_path / "a.ggz", tmp_path / "b.ggz"
    save_artifacts(art1, p1)
    save_artifacts(art2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_fingerprint_stable_and_content_sensitive(tmp_path):
    _, _, art, _ = _fit(seed=4)
    _, _, other, _ = _fit(seed=5)
    assert art.fingerprint() == art.fingerprint()
    assert art.fingerprint() != other.fingerprint()


def test_corrupt_file_errors(tmp_path):
    path = tmp_path / "corpus.ggz"
    path.write_bytes(b"this is not a zip")
    with pytest.raises(ArtifactError):
        load_artifacts(path)
