"""Reference-corpus artifacts: everything scoring needs, plus file round-trip.

The artifact bundles the corpus geometry (unit vectors, type centroids,
calibrated temperature, topic distributions) with the per-project raw
statistics that back the z-score baselines. Raw per-project matrices are
stored rather than their means/spreads so that similarity-weighted scoring
can reweight them later without refitting.

The container file is a stored (uncompressed) zip of .npy payloads plus a
JSON metadata entry, written with fixed timestamps so identical inputs
produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .corpus import Taxonomy
from .prototypes import TypeCentroids
from .topics import TopicModel

ARTIFACT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class ArtifactError(ValueError):
    """Corrupt or incompatible artifact file."""


@dataclass
class CorpusArtifacts:
    """Fitted corpus state for gap scoring.

    Per-point and per-type baseline statistics are kept as raw per-project
    matrices; NaN marks unusable entries (a point's own project, or a
    project with no points of a type). Means and spreads are derived per
    scoring call from the active project weights.
    """

    taxonomy: Taxonomy
    k: int
    projects: tuple[str, ...]
    corpus_ids: tuple[str, ...]
    corpus_project_idx: np.ndarray      # (N,) int, index into projects
    corpus_matrix: np.ndarray           # (N, d) unit rows
    corpus_type_idx: np.ndarray         # (N,) int, ground-truth type
    corpus_hard_type: np.ndarray        # (N,) int, nearest-centroid type
    centroids: TypeCentroids
    temperature: float
    topic_model: TopicModel
    corpus_topics: np.ndarray           # (N, K_s)
    phi_pp: np.ndarray                  # (N, M) coverage distance per project
    d_t_pj: np.ndarray                  # (K_t, M) type-restricted distance
    n_t_pj: np.ndarray                  # (K_t, M) soft count per project
    project_centroids: np.ndarray       # (M, d)
    type_presence: np.ndarray           # (K_t, M) bool, ground-truth presence
    _fingerprint: str | None = field(default=None, repr=False, compare=False)

    @property
    def n_points(self) -> int:
        return len(self.corpus_ids)

    @property
    def dim(self) -> int:
        return self.corpus_matrix.shape[1]

    @property
    def k_t(self) -> int:
        return self.taxonomy.k_t

    @property
    def k_s(self) -> int:
        return self.topic_model.k_s

    def uniform_weights(self) -> np.ndarray:
        m = len(self.projects)
        return np.full(m, 1.0 / m)

    def point_baselines(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(phi0, sigma, available) per corpus point under the given weights."""
        return _weighted_nan_stats(self.phi_pp, weights)

    def type_distance_baselines(self, weights: np.ndarray):
        return _weighted_nan_stats(self.d_t_pj, weights)

    def type_count_baselines(self, weights: np.ndarray):
        return _weighted_nan_stats(self.n_t_pj, weights)

    def fingerprint(self) -> str:
        """sha256 of the canonical serialised form (cached)."""
        if self._fingerprint is None:
            buf = io.BytesIO()
            _write(self, buf)
            self._fingerprint = hashlib.sha256(buf.getvalue()).hexdigest()
        return self._fingerprint


def _weighted_nan_stats(values: np.ndarray, weights: np.ndarray):
    """Weighted mean and population spread over the finite entries per row.

    Rows with fewer than 2 finite entries are flagged unavailable: a spread
    estimated from one project is meaningless, so downstream scores for
    such rows are forced to zero.
    """
    values = np.atleast_2d(values)
    mask = np.isfinite(values)
    w = np.where(mask, weights[None, :], 0.0)
    norm = w.sum(axis=1)
    counts = mask.sum(axis=1)
    available = counts >= 2
    safe_norm = np.where(norm > 0, norm, 1.0)
    vals = np.where(mask, values, 0.0)
    mean = (w * vals).sum(axis=1) / safe_norm
    var = (w * np.where(mask, (values - mean[:, None]) ** 2, 0.0)).sum(axis=1) / safe_norm
    mean = np.where(counts > 0, mean, np.nan)
    return mean, np.sqrt(var), available


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_ARRAYS = (
    "corpus_matrix", "corpus_project_idx", "corpus_type_idx", "corpus_hard_type",
    "corpus_topics", "phi_pp", "d_t_pj", "n_t_pj", "project_centroids",
    "type_presence",
)


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _write(art: CorpusArtifacts, fh: BinaryIO) -> None:
    meta = {
        "version": ARTIFACT_VERSION,
        "k": art.k,
        "temperature": art.temperature,
        "taxonomy": {
            "type_names": list(art.taxonomy.type_names),
            "parent": dict(art.taxonomy.parent) if art.taxonomy.parent else None,
        },
        "projects": list(art.projects),
        "corpus_ids": list(art.corpus_ids),
        "centroid_present": [bool(b) for b in art.centroids.present],
        "topic_model": {
            "k_s": art.topic_model.k_s,
            "labels": list(art.topic_model.labels),
            "temperature": art.topic_model.temperature,
            "fallback": art.topic_model.is_fallback,
        },
    }
    entries: list[tuple[str, bytes]] = [
        ("meta.json", json.dumps(meta, sort_keys=True).encode("utf-8")),
        ("centroids_mu.npy", _npy_bytes(art.centroids.mu)),
    ]
    if art.topic_model.centroids is not None:
        entries.append(("topic_centroids.npy", _npy_bytes(art.topic_model.centroids)))
    for name in _ARRAYS:
        entries.append((f"{name}.npy", _npy_bytes(getattr(art, name))))
    with zipfile.ZipFile(fh, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in entries:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            zf.writestr(info, payload)


def save_artifacts(art: CorpusArtifacts, path: str | Path) -> None:
    with open(path, "wb") as fh:
        _write(art, fh)


def load_artifacts(path: str | Path) -> CorpusArtifacts:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            if meta.get("version") != ARTIFACT_VERSION:
                raise ArtifactError(
                    f"{path.name}: unsupported artifact version {meta.get('version')}"
                )
            arrays: dict[str, np.ndarray] = {}
            for name in _ARRAYS + ("centroids_mu",):
                arrays[name] = np.lib.format.read_array(
                    io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False
                )
            tm_meta = meta["topic_model"]
            topic_centroids = None
            if tm_meta["fallback"]:
                topic_centroids = np.lib.format.read_array(
                    io.BytesIO(zf.read("topic_centroids.npy")), allow_pickle=False
                )
    except (KeyError, zipfile.BadZipFile) as exc:
        raise ArtifactError(f"{path.name}: corrupt artifact file ({exc})") from None

    taxonomy = Taxonomy(
        tuple(meta["taxonomy"]["type_names"]),
        parent=meta["taxonomy"]["parent"],
    )
    centroids = TypeCentroids(
        taxonomy=taxonomy,
        mu=arrays["centroids_mu"],
        present=np.asarray(meta["centroid_present"], dtype=bool),
    )
    topic_model = TopicModel(
        k_s=tm_meta["k_s"],
        labels=tuple(tm_meta["labels"]),
        centroids=topic_centroids,
        temperature=tm_meta["temperature"],
    )
    return CorpusArtifacts(
        taxonomy=taxonomy,
        k=int(meta["k"]),
        projects=tuple(meta["projects"]),
        corpus_ids=tuple(meta["corpus_ids"]),
        corpus_project_idx=arrays["corpus_project_idx"],
        corpus_matrix=arrays["corpus_matrix"],
        corpus_type_idx=arrays["corpus_type_idx"],
        corpus_hard_type=arrays["corpus_hard_type"],
        centroids=centroids,
        temperature=float(meta["temperature"]),
        topic_model=topic_model,
        corpus_topics=arrays["corpus_topics"],
        phi_pp=arrays["phi_pp"],
        d_t_pj=arrays["d_t_pj"],
        n_t_pj=arrays["n_t_pj"],
        project_centroids=arrays["project_centroids"],
        type_presence=arrays["type_presence"],
    )
