"""Embedding providers: text in, unit-norm vector out.

Documents and queries take distinct pathways; queries are prefixed with a
retrieval instruction. The hashed bag-of-tokens reference embedder is the
deterministic stand-in used by tests and synthetic pipelines; real neural
backends plug in behind the same provider interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .chunking import tokenize

DEFAULT_QUERY_INSTRUCTION = (
    "Given a clinical question, retrieve relevant passages from clinical notes"
)


class EmbeddingError(Exception):
    pass


class NormalizationError(EmbeddingError):
    pass


class TransientProviderError(EmbeddingError):
    """Retriable failure (timeouts, connection loss, 5xx)."""


class PermanentProviderError(EmbeddingError):
    """Non-retriable failure (bad request, wrong dimension)."""


@dataclass(frozen=True)
class EmbedderConfig:
    dimension: int = 1024
    query_instruction: str = DEFAULT_QUERY_INSTRUCTION
    provider_id: str = "hashed-bag"

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a raw vector to unit L2 norm."""
    v = np.asarray(v, dtype=np.float32)
    if not np.all(np.isfinite(v)):
        raise NormalizationError("vector has non-finite entries")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise NormalizationError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


class EmbeddingProvider(Protocol):
    config: EmbedderConfig

    def embed_documents(self, texts: Sequence[str]) -> np.ndarray: ...

    def embed_query(self, text: str) -> np.ndarray: ...


# FNV-1a 64-bit; fixed constants so vectors are stable across runs and platforms.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def reference_embed(text: str, dimension: int) -> np.ndarray:
    """Hashed bag-of-tokens embedding.

    Each lowercased token hashes to a (dimension index, sign) pair; counts
    accumulate and the result is L2-normalized. An empty token set maps to
    the first basis vector so every output is a valid unit vector.
    """
    if dimension <= 0:
        raise ValueError("dimension must be positive")
    acc = np.zeros(dimension, dtype=np.float64)
    spans = tokenize(text)
    if not spans:
        out = np.zeros(dimension, dtype=np.float32)
        out[0] = 1.0
        return out
    for s in spans:
        h = _fnv1a64(text[s.start_char : s.end_char].lower().encode("utf-8"))
        sign = 1.0 if (h >> 63) == 0 else -1.0
        acc[h % dimension] += sign
    norm = np.linalg.norm(acc)
    if norm == 0.0:
        # Signs cancelled exactly; fall back to the same fixed basis vector.
        out = np.zeros(dimension, dtype=np.float32)
        out[0] = 1.0
        return out
    return (acc / norm).astype(np.float32)


class HashedBagEmbedder:
    """Deterministic reference provider built on :func:`reference_embed`."""

    def __init__(self, config: EmbedderConfig | None = None):
        self.config = config or EmbedderConfig()

    def embed_documents(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            raise ValueError("texts must be nonempty")
        out = np.empty((len(texts), self.config.dimension), dtype=np.float32)
        for i, t in enumerate(texts):
            out[i] = reference_embed(t, self.config.dimension)
        return out

    def embed_query(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("query text must be nonempty")
        instruction = self.config.query_instruction
        prefixed = f"{instruction}\n{text}" if instruction else text
        return reference_embed(prefixed, self.config.dimension)


class RemoteHttpEmbedder:
    """Adapter for a remote embedding service.

    Wire format: POST {base_url}/embed with ``{"texts": [...], "mode":
    "document"|"query"}``; response ``{"vectors": [[...], ...]}``. Transport
    failures and 5xx responses raise TransientProviderError; 4xx responses
    raise PermanentProviderError.
    """

    def __init__(
        self,
        base_url: str,
        config: EmbedderConfig,
        client: httpx.Client | None = None,
        timeout: float = 30.0,
    ):
        self.config = config
        self._base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def _call(self, texts: Sequence[str], mode: str) -> np.ndarray:
        try:
            resp = self._client.post(
                f"{self._base_url}/embed",
                json={"texts": list(texts), "mode": mode},
            )
        except httpx.HTTPError as exc:
            raise TransientProviderError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransientProviderError(f"provider returned {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentProviderError(f"provider returned {resp.status_code}")
        vectors = np.asarray(resp.json()["vectors"], dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape != (len(texts), self.config.dimension):
            raise PermanentProviderError(
                f"expected {(len(texts), self.config.dimension)} vectors, "
                f"got {vectors.shape}"
            )
        return np.stack([l2_normalize(v) for v in vectors])

    def embed_documents(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            raise ValueError("texts must be nonempty")
        return self._call(texts, "document")

    def embed_query(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("query text must be nonempty")
        instruction = self.config.query_instruction
        prefixed = f"{instruction}\n{text}" if instruction else text
        return self._call([prefixed], "query")[0]
