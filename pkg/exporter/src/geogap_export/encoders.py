"""Sentence encoders: pretrained models via sentence-transformers, plus a
deterministic hashing encoder for offline use and format testing."""
from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

from .records import ExportError

DEFAULT_MODEL = "Qwen/Qwen3-Embedding-0.6B"
_TOKEN = re.compile(r"[a-z0-9]+")


class Encoder(Protocol):
    dim: int

    def encode(self, texts: Sequence[str], batch: int = 32) -> np.ndarray: ...


class HashEncoder:
    """Signed token hashing into a fixed number of buckets, L2-normalised.

    No model weights, no randomness: the same text always maps to the same
    unit vector. Good enough to exercise the file formats and pipelines;
    not a semantic embedding.
    """

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ExportError("hash encoder needs dim >= 2")
        self.dim = dim

    def _vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            v[bucket] += sign
        if not v.any():
            v[len(text) % self.dim] = 1.0
        return v / np.linalg.norm(v)

    def encode(self, texts: Sequence[str], batch: int = 32) -> np.ndarray:
        return np.vstack([self._vector(t) for t in texts])


class SentenceTransformerEncoder:
    """Wrapper around sentence-transformers with normalised output."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ExportError(
                f"sentence-transformers is not installed; cannot load {model_name!r} "
                f"(pip install geogap-export[models])") from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise ExportError(f"failed to load model {model_name!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str], batch: int = 32) -> np.ndarray:
        out = self._model.encode(list(texts), batch_size=batch,
                                 normalize_embeddings=True,
                                 show_progress_bar=False)
        return np.asarray(out, dtype=np.float64)


def resolve_encoder(spec: str) -> Encoder:
    """Encoder from a backend spec: 'hash', 'hash:<dim>', or a model name."""
    if spec == "hash":
        return HashEncoder()
    if spec.startswith("hash:"):
        try:
            return HashEncoder(int(spec.split(":", 1)[1]))
        except ValueError:
            raise ExportError(f"bad hash encoder spec {spec!r}") from None
    if spec.startswith("st:"):
        return SentenceTransformerEncoder(spec.split(":", 1)[1])
    return SentenceTransformerEncoder(spec)
