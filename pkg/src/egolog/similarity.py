"""Text embeddings and cosine similarity.

The digest stages only ever compare texts through this module: a backend
turns texts into fixed-dimension vectors and `cosine` scores a pair. Two
backends ship with the package: a deterministic offline mock (seeded
feature hashing of character trigrams, for tests and desk runs) and an
HTTP client for a real embedding service.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import BackendProtocolError, ConfigError, TransportError
from .retry import RetryPolicy, call_with_retries

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Embedding:
    """A fixed-length real vector for one text."""

    vector: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.vector, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding vector must be a non-empty 1-D array")
        arr.setflags(write=False)
        object.__setattr__(self, "vector", arr)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@runtime_checkable
class EmbedderBackend(Protocol):
    """Batch text embedder. Same text must map to the same vector within one instance."""

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]: ...


class MockEmbedder:
    """Offline embedder: seeded feature hashing of character trigrams.

    Embeddings are a pure function of the text bytes and the seed, so
    pipelines run with this backend are bit-for-bit reproducible. Near
    identical texts share most trigrams and score high; unrelated texts
    decorrelate through the signed hash.
    """

    def __init__(self, seed: int = 0, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._dim = dim
        self._key = int(seed).to_bytes(8, "little", signed=True)
        self._cache: dict[str, list[float]] = {}
        self._lock = threading.Lock()

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            with self._lock:
                cached = self._cache.get(text)
            if cached is None:
                cached = self._embed(text)
                with self._lock:
                    self._cache[text] = cached
            out.append(cached)
        return out

    def _embed(self, text: str) -> list[float]:
        data = b"\x02" + text.encode("utf-8") + b"\x03"
        vec = np.zeros(self._dim)
        for i in range(len(data) - 2):
            h = int.from_bytes(
                hashlib.blake2b(data[i : i + 3], key=self._key, digest_size=8).digest(),
                "little",
            )
            idx = (h >> 8) % self._dim
            vec[idx] += 1.0 if h & 1 == 0 else -1.0
        if not np.any(vec):
            # signed counts of a degenerate text cancelled out; fall back to
            # a whole-text hash so the vector stays usable
            h = int.from_bytes(
                hashlib.blake2b(data, key=self._key, digest_size=8).digest(), "little"
            )
            vec[(h >> 8) % self._dim] = 1.0 if h & 1 == 0 else -1.0
        return vec.tolist()


class HttpEmbedder:
    """Client for an HTTP embedding endpoint.

    POSTs ``{"texts": [...]}`` and expects ``{"embeddings": [[...], ...]}``.
    The bearer token, if any, is read from the environment variable named in
    the configuration. Responses are cached per exact text.
    """

    def __init__(
        self,
        endpoint: str,
        auth_env: str | None = None,
        *,
        timeout_s: float = 60.0,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._endpoint = endpoint
        self._timeout_s = timeout_s
        self._retry = retry
        self._sleep = sleep
        self._token: str | None = None
        if auth_env:
            token = os.environ.get(auth_env)
            if token is None:
                raise ConfigError(f"auth environment variable {auth_env!r} is not set")
            self._token = token
        self._cache: dict[str, list[float]] = {}
        self._lock = threading.Lock()

    def embed_texts(self, texts: Sequence[str]) -> list[list[float]]:
        with self._lock:
            misses = [t for t in texts if t not in self._cache]
        misses = list(dict.fromkeys(misses))
        if misses:
            vectors = call_with_retries(
                lambda: self._post(misses),
                policy=self._retry,
                sleep=self._sleep,
                what="embedding request",
            )
            if len(vectors) != len(misses):
                raise BackendProtocolError(
                    f"count mismatch: sent {len(misses)} texts, got {len(vectors)} embeddings"
                )
            with self._lock:
                for text, vec in zip(misses, vectors):
                    self._cache[text] = [float(x) for x in vec]
        with self._lock:
            return [self._cache[t] for t in texts]

    def _post(self, texts: list[str]) -> list[list[float]]:
        import requests

        headers = {}
        if self._token is not None:
            headers["Authorization"] = f"Bearer {self._token}"
        try:
            resp = requests.post(
                self._endpoint,
                json={"texts": texts},
                headers=headers,
                timeout=self._timeout_s,
            )
        except requests.RequestException as exc:
            raise TransportError(f"embedding endpoint unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"embedding endpoint returned {resp.status_code}")
        if resp.status_code != 200:
            raise BackendProtocolError(
                f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            payload = resp.json()
            vectors = payload["embeddings"]
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendProtocolError(f"bad embedding response: {exc}") from exc
        if not isinstance(vectors, list):
            raise BackendProtocolError("embeddings field is not a list")
        return vectors


def embed_batch(backend: EmbedderBackend, texts: Sequence[str]) -> list[Embedding]:
    """Embed texts through a backend, enforcing the batch contract.

    One embedding per text, order preserved, homogeneous dimension, no zero
    vectors. Count or dimension violations are fatal.
    """
    if len(texts) == 0:
        raise ValueError("embed_batch requires at least one text")
    for text in texts:
        if not text:
            raise ValueError("embed_batch texts must be non-empty")
    vectors = backend.embed_texts(list(texts))
    if len(vectors) != len(texts):
        raise BackendProtocolError(
            f"count mismatch: sent {len(texts)} texts, got {len(vectors)} embeddings"
        )
    embeddings = [Embedding(np.asarray(v, dtype=np.float64)) for v in vectors]
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise BackendProtocolError(f"dimension mismatch across batch: {sorted(dims)}")
    for text, emb in zip(texts, embeddings):
        if not np.any(emb.vector):
            raise BackendProtocolError(f"zero embedding vector for text {text[:50]!r}")
    return embeddings


def cosine(a: Embedding, b: Embedding) -> float:
    """Cosine similarity in [-1, 1] (up to float slack of ~1e-12)."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    norm_a = float(np.linalg.norm(a.vector))
    norm_b = float(np.linalg.norm(b.vector))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for zero-norm vector")
    return float(np.dot(a.vector, b.vector) / (norm_a * norm_b))
