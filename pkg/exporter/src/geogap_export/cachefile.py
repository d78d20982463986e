"""Binary embedding cache writer/reader.

Layout (little-endian): magic "VECCACHE" (8 bytes), u32 version (=1),
u32 dim, u64 count, then per record: u16 id length, UTF-8 id bytes,
dim float32 values. Vectors are written unit-normalised; the consumer
re-normalises on load to absorb the float32 quantisation.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .records import ExportError

MAGIC = b"VECCACHE"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")
_IDLEN = struct.Struct("<H")


def write_cache(path: str | Path, ids: Sequence[str], vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(ids):
        raise ExportError("vectors must be shaped (len(ids), dim)")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms <= 0) or not np.all(np.isfinite(norms)):
        bad = ids[int(np.argmin(norms))]
        raise ExportError(f"vector for id {bad!r} has zero or non-finite norm")
    unit = (vectors / norms[:, None]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, vectors.shape[1], len(ids)))
        for rid, row in zip(ids, unit):
            raw = str(rid).encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ExportError(f"id too long for the cache format: {rid[:32]!r}")
            fh.write(_IDLEN.pack(len(raw)))
            fh.write(raw)
            fh.write(row.tobytes())


def read_cache(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read back a cache written here (used by the topics subcommand)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ExportError(f"{path.name}: truncated header")
        magic, version, dim, count = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise ExportError(f"{path.name}: not a version-{VERSION} cache file")
        ids: list[str] = []
        rows = np.empty((count, dim), dtype=np.float64)
        for n in range(count):
            lraw = fh.read(_IDLEN.size)
            if len(lraw) < _IDLEN.size:
                raise ExportError(f"{path.name}: truncated at record {n}")
            (idlen,) = _IDLEN.unpack(lraw)
            rid = fh.read(idlen).decode("utf-8")
            vec = fh.read(4 * dim)
            if len(vec) < 4 * dim:
                raise ExportError(f"{path.name}: truncated at record {n}")
            ids.append(rid)
            rows[n] = np.frombuffer(vec, dtype="<f4").astype(np.float64)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return ids, rows
