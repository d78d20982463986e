from __future__ import annotations

import http.server
import json
import threading

import numpy as np
import pytest

from geogap.embeddings import (EmbeddingError, EmbeddingStore,
                               RemoteEmbeddingError, cosine_distance,
                               fetch_remote, load_cache, normalize, save_cache)
from synthdata import random_unit_vectors


def test_normalize_three_four_five():
    np.testing.assert_allclose(normalize(np.array([3.0, 4.0])), [0.6, 0.8])


def test_normalize_idempotent_on_unit_vector():
    v = np.array([0.6, 0.8])
    np.testing.assert_allclose(normalize(v), v, atol=1e-12)


def test_normalize_zero_vector_errors():
    with pytest.raises(EmbeddingError):
        normalize(np.zeros(3))


def test_cosine_distance_basic_cases():
    u = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    assert cosine_distance(u, u) == pytest.approx(0.0)
    assert cosine_distance(u, v) == pytest.approx(1.0)
    assert cosine_distance(u, -u) == pytest.approx(2.0)


def test_cosine_distance_symmetric_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        mat = rng.normal(size=(2, 5))
        u, v = (row / np.linalg.norm(row) for row in mat)
        assert cosine_distance(u, v) == pytest.approx(cosine_distance(v, u))
        assert 0.0 <= cosine_distance(u, v) <= 2.0


def test_cosine_distance_dim_mismatch():
    with pytest.raises(EmbeddingError):
        cosine_distance(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))


def test_store_rejects_non_unit_rows():
    with pytest.raises(EmbeddingError, match="norm"):
        EmbeddingStore(["a"], np.array([[2.0, 0.0]]))


def test_knn_pool_of_one_ignores_k():
    store = EmbeddingStore(["a", "b"], np.eye(2))
    res = store.knn(np.array([1.0, 0.0]), ["b"], k=5)
    assert res.ids == ("b",)


def test_knn_query_in_pool_is_rank_one_at_zero():
    mat = random_unit_vectors(6, 4, seed=1)
    ids = [f"v{i}" for i in range(6)]
    store = EmbeddingStore(ids, mat)
    res = store.knn(mat[2], ids, k=3)
    assert res.ids[0] == "v2"
    assert res.distances[0] == pytest.approx(0.0, abs=1e-12)
    assert list(res.distances) == sorted(res.distances)


def test_knn_matches_exhaustive_sort_oracle():
    mat = random_unit_vectors(5, 4, seed=7)
    ids = [f"v{i}" for i in range(5)]
    store = EmbeddingStore(ids, mat)
    q = random_unit_vectors(1, 4, seed=8)[0]
    res = store.knn(q, ids, k=3)
    oracle = sorted(((1.0 - float(mat[i] @ q), ids[i]) for i in range(5)))
    assert list(res.ids) == [rid for _, rid in oracle[:3]]
    np.testing.assert_allclose(res.distances, [d for d, _ in oracle[:3]], atol=1e-12)


def test_knn_full_pool_is_distance_sorted_permutation():
    rng = np.random.default_rng(11)
    for trial in range(25):
        n = int(rng.integers(2, 33))
        mat = random_unit_vectors(n, 5, seed=100 + trial)
        ids = [f"v{i:02d}" for i in range(n)]
        store = EmbeddingStore(ids, mat)
        q = random_unit_vectors(1, 5, seed=200 + trial)[0]
        res = store.knn(q, ids, k=n)
        assert sorted(res.ids) == sorted(ids)
        oracle = sorted(((1.0 - float(mat[i] @ q), ids[i]) for i in range(n)))
        assert list(res.ids) == [rid for _, rid in oracle]


def test_knn_tie_breaks_by_id():
    v = np.array([1.0, 0.0])
    store = EmbeddingStore(["b", "a", "c"], np.vstack([v, v, v]))
    res = store.knn(v, ["b", "a", "c"], k=3)
    assert res.ids == ("a", "b", "c")


def test_knn_empty_pool_errors():
    store = EmbeddingStore(["a"], np.array([[1.0, 0.0]]))
    with pytest.raises(EmbeddingError):
        store.knn(np.array([1.0, 0.0]), [], k=1)


def test_cache_round_trip(tmp_path):
    mat = random_unit_vectors(7, 16, seed=5)
    ids = [f"req-{i}" for i in range(7)]
    path = tmp_path / "emb.bin"
    save_cache(path, ids, mat)
    store = load_cache(path)
    assert store.ids == tuple(ids)
    assert store.dim == 16
    np.testing.assert_allclose(store.submatrix(ids), mat, atol=1e-7)


def test_cache_truncated_record_errors(tmp_path):
    mat = random_unit_vectors(3, 8, seed=6)
    path = tmp_path / "emb.bin"
    save_cache(path, ["a", "b", "c"], mat)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(EmbeddingError, match="truncated"):
        load_cache(path)


def test_cache_bad_magic_errors(tmp_path):
    path = tmp_path / "emb.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 24)
    with pytest.raises(EmbeddingError, match="magic"):
        load_cache(path)


def test_cache_duplicate_id_errors(tmp_path):
    mat = random_unit_vectors(2, 4, seed=9)
    path = tmp_path / "emb.bin"
    save_cache(path, ["same", "same"], mat)
    with pytest.raises(EmbeddingError, match="duplicate"):
        load_cache(path)


class _EmbedHandler(http.server.BaseHTTPRequestHandler):
    fail_times = 0
    calls = 0
    mismatch = False

    def do_POST(self):
        cls = type(self)
        cls.calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if cls.fail_times > 0:
            cls.fail_times -= 1
            self.send_response(503)
            self.end_headers()
            return
        texts = body["texts"]
        vectors = [[float(len(t)), 1.0, 0.0] for t in texts]
        if cls.mismatch and vectors:
            vectors = vectors[:-1]
        payload = json.dumps({"embeddings": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def embed_server():
    _EmbedHandler.fail_times = 0
    _EmbedHandler.calls = 0
    _EmbedHandler.mismatch = False
    server = http.server.HTTPServer(("127.0.0.1", 0), _EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


def test_fetch_remote_preserves_order(embed_server):
    vecs = fetch_remote(["ab", "wxyz"], embed_server, batch=1)
    assert [v[0] for v in vecs] == [2.0, 4.0]


def test_fetch_remote_empty_list(embed_server):
    assert fetch_remote([], embed_server) == []
    assert _EmbedHandler.calls == 0


def test_fetch_remote_count_mismatch_errors(embed_server):
    _EmbedHandler.mismatch = True
    with pytest.raises(RemoteEmbeddingError, match="1 vectors for 2 texts"):
        fetch_remote(["a", "b"], embed_server)


def test_fetch_remote_retries_transient_failures(embed_server):
    _EmbedHandler.fail_times = 2
    vecs = fetch_remote(["abc"], embed_server, max_attempts=4, backoff=0.01)
    assert vecs[0][0] == 3.0
    assert _EmbedHandler.calls == 3


def test_fetch_remote_exhausted_retries_carries_status(embed_server):
    _EmbedHandler.fail_times = 99
    with pytest.raises(RemoteEmbeddingError) as exc:
        fetch_remote(["abc"], embed_server, max_attempts=2, backoff=0.01)
    assert exc.value.status == 503
