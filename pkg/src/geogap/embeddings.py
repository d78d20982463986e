"""Unit-vector embedding store: cosine geometry, exact k-NN, cache file, remote fetch.

All vectors live on the unit hypersphere; cosine distance is 1 - u.v in
[0, 2]. Nearest-neighbour queries are exact linear scans (corpora here are
a few hundred to a few thousand points) with deterministic tie-breaking by
requirement id, so results are reproducible across platforms.
"""
from __future__ import annotations

import json
import struct
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CACHE_MAGIC = b"VECCACHE"
CACHE_VERSION = 1
UNIT_NORM_TOL = 1e-6


class EmbeddingError(ValueError):
    """Bad vector, store lookup failure, or malformed cache file."""


class RemoteEmbeddingError(RuntimeError):
    """Remote embedding endpoint failed; carries the last HTTP status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


def normalize(v: np.ndarray) -> np.ndarray:
    """Scale v to unit L2 norm. Zero vectors are an error."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= 0.0 or not np.isfinite(norm):
        raise EmbeddingError("cannot normalize a zero or non-finite vector")
    return v / norm


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - u.v for unit vectors; symmetric, in [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return 1.0 - float(u @ v)


@dataclass(frozen=True)
class NeighbourResult:
    """k-NN query result: ids with matching ascending cosine distances."""

    ids: tuple[str, ...]
    distances: tuple[float, ...]


class EmbeddingStore:
    """Immutable map requirement id -> unit vector of fixed dimension."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise EmbeddingError("matrix must be 2-D (n_vectors, dim)")
        if len(ids) != matrix.shape[0]:
            raise EmbeddingError(f"{len(ids)} ids but {matrix.shape[0]} vectors")
        if len(set(ids)) != len(ids):
            raise EmbeddingError("duplicate ids in store")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise EmbeddingError(
                f"vector for id {ids[bad]!r} has norm {norms[bad]:.8f}, expected 1"
            )
        self._ids = tuple(str(i) for i in ids)
        self._index = {rid: row for row, rid in enumerate(self._ids)}
        self._matrix = matrix
        self._matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, rid: str) -> bool:
        return rid in self._index

    def vector(self, rid: str) -> np.ndarray:
        try:
            return self._matrix[self._index[rid]]
        except KeyError:
            raise EmbeddingError(f"no embedding for id {rid!r}") from None

    def submatrix(self, ids: Sequence[str]) -> np.ndarray:
        """Rows for the given ids, in the given order."""
        try:
            rows = [self._index[rid] for rid in ids]
        except KeyError as exc:
            raise EmbeddingError(f"no embedding for id {exc.args[0]!r}") from None
        return self._matrix[rows]

    def knn(self, x: np.ndarray, pool: Sequence[str], k: int) -> NeighbourResult:
        """Exact k nearest neighbours of x within pool by cosine distance.

        k larger than the pool truncates to the pool size. Ties at equal
        distance break by ascending requirement id.
        """
        if len(pool) == 0:
            raise EmbeddingError("knn pool is empty")
        if k < 1:
            raise EmbeddingError("k must be >= 1")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise EmbeddingError(f"query has shape {x.shape}, store dim is {self.dim}")
        k = min(k, len(pool))
        mat = self.submatrix(pool)
        dists = 1.0 - mat @ x
        order = np.lexsort((np.asarray(pool, dtype=str), dists))[:k]
        return NeighbourResult(
            ids=tuple(pool[i] for i in order),
            distances=tuple(float(dists[i]) for i in order),
        )


# ---------------------------------------------------------------------------
# Binary cache file
#
# Layout (little-endian throughout):
#   8-byte magic "VECCACHE" | u32 version | u32 dim | u64 count
#   then per record: u16 id_length | id bytes (utf-8) | dim * f32
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<8sIIQ")
_IDLEN = struct.Struct("<H")


def save_cache(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write vectors to the binary cache format (32-bit floats)."""
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise EmbeddingError("matrix must be (len(ids), dim)")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, matrix.shape[1], len(ids)))
        for rid, row in zip(ids, matrix):
            raw = str(rid).encode("utf-8")
            if len(raw) > 0xFFFF:
                raise EmbeddingError(f"id too long to cache: {rid[:32]!r}...")
            fh.write(_IDLEN.pack(len(raw)))
            fh.write(raw)
            fh.write(row.astype("<f4").tobytes())


def load_cache(path: str | Path) -> EmbeddingStore:
    """Read a binary cache into a store, re-normalising each vector.

    Re-normalisation absorbs the float32 quantisation drift so the store's
    unit-norm invariant holds exactly at float64.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise EmbeddingError(f"{path.name}: truncated header")
        magic, version, dim, count = _HEADER.unpack(head)
        if magic != CACHE_MAGIC:
            raise EmbeddingError(f"{path.name}: bad magic {magic!r}")
        if version != CACHE_VERSION:
            raise EmbeddingError(f"{path.name}: unsupported cache version {version}")
        if dim == 0:
            raise EmbeddingError(f"{path.name}: header declares dim 0")
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float64)
        row_bytes = 4 * dim
        for n in range(count):
            lraw = fh.read(_IDLEN.size)
            if len(lraw) < _IDLEN.size:
                raise EmbeddingError(f"{path.name}: truncated at record {n}")
            (idlen,) = _IDLEN.unpack(lraw)
            rid = fh.read(idlen)
            vec = fh.read(row_bytes)
            if len(rid) < idlen or len(vec) < row_bytes:
                raise EmbeddingError(f"{path.name}: truncated at record {n}")
            rid_s = rid.decode("utf-8")
            if rid_s in set(ids):
                raise EmbeddingError(f"{path.name}: duplicate id {rid_s!r}")
            ids.append(rid_s)
            rows[n] = np.frombuffer(vec, dtype="<f4").astype(np.float64)
        if fh.read(1):
            raise EmbeddingError(f"{path.name}: trailing bytes after {count} records")
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms <= 0):
        bad = ids[int(np.argmin(norms))]
        raise EmbeddingError(f"{path.name}: zero vector for id {bad!r}")
    rows /= norms[:, None]
    return EmbeddingStore(ids, rows)


# ---------------------------------------------------------------------------
# Remote embedding endpoint
#
# POST {"texts": [...]} -> {"embeddings": [[...], ...]}, one vector per text,
# order-preserving. Transient failures (connection errors, HTTP 5xx) retry
# with exponential backoff; anything else fails fast.
# ---------------------------------------------------------------------------


def fetch_remote(
    texts: Sequence[str],
    endpoint: str,
    batch: int = 32,
    auth_token: str | None = None,
    max_attempts: int = 4,
    backoff: float = 0.5,
    timeout: float = 30.0,
) -> list[np.ndarray]:
    """Fetch raw (un-normalised) embedding vectors for texts, in input order."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    out: list[np.ndarray] = []
    for start in range(0, len(texts), batch):
        chunk = list(texts[start : start + batch])
        vectors = _fetch_batch(chunk, endpoint, auth_token, max_attempts, backoff, timeout)
        if len(vectors) != len(chunk):
            raise RemoteEmbeddingError(
                f"endpoint returned {len(vectors)} vectors for {len(chunk)} texts"
            )
        out.extend(np.asarray(v, dtype=np.float64) for v in vectors)
    return out


def _fetch_batch(
    chunk: list[str],
    endpoint: str,
    auth_token: str | None,
    max_attempts: int,
    backoff: float,
    timeout: float,
) -> list:
    body = json.dumps({"texts": chunk}).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if auth_token:
        headers["Authorization"] = f"Bearer {auth_token}"
    last_status: int | None = None
    last_err = "no attempt made"
    for attempt in range(max_attempts):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        req = urllib.request.Request(endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            last_status, last_err = exc.code, f"HTTP {exc.code}"
            if exc.code < 500:
                raise RemoteEmbeddingError(
                    f"embedding endpoint rejected request: HTTP {exc.code}", status=exc.code
                ) from None
            continue
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            last_err = str(exc)
            continue
        if "embeddings" not in payload:
            raise RemoteEmbeddingError("endpoint response lacks 'embeddings' field")
        return payload["embeddings"]
    raise RemoteEmbeddingError(
        f"embedding endpoint failed after {max_attempts} attempts: {last_err}",
        status=last_status,
    )


def store_from_vectors(pairs: Iterable[tuple[str, np.ndarray]]) -> EmbeddingStore:
    """Build a store from (id, raw vector) pairs, normalising each."""
    ids, rows = [], []
    for rid, vec in pairs:
        ids.append(str(rid))
        rows.append(normalize(vec))
    if not ids:
        raise EmbeddingError("no vectors given")
    return EmbeddingStore(ids, np.vstack(rows))
