"""Query embeddings with a content-addressed on-disk cache.

Cache files hold one entry per line, ``<sha256>\\t<dimension>\\t<v1,v2,...>``.
The file is append-only; a dimension that disagrees with earlier entries is a
hard error.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import httpx

from ..errors import DimensionMismatchError, EmbeddingError, OfflineMissError

logger = logging.getLogger(__name__)

DEFAULT_CREDENTIAL_ENV = "COSTAUDIT_EMBEDDING_API_KEY"
DEFAULT_ENDPOINT_ENV = "COSTAUDIT_EMBEDDING_URL"
DEFAULT_MODEL_ENV = "COSTAUDIT_EMBEDDING_MODEL"


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.dimension: int | None = None
        self._vectors: dict[str, tuple[float, ...]] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    digest, dim, values = line.split("\t")
                    vec = tuple(float(v) for v in values.split(","))
                    dim = int(dim)
                except ValueError:
                    raise EmbeddingError(f"{self.path}:{lineno}: malformed cache entry") from None
                if len(vec) != dim:
                    raise DimensionMismatchError(
                        f"{self.path}:{lineno}: header says {dim} values, found {len(vec)}"
                    )
                self._check_dim(dim)
                self._vectors[digest] = vec

    def _check_dim(self, dim: int) -> None:
        if self.dimension is None:
            self.dimension = dim
        elif dim != self.dimension:
            raise DimensionMismatchError(
                f"embedding dimension {dim} disagrees with cached dimension {self.dimension}"
            )

    def __contains__(self, digest: str) -> bool:
        return digest in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, digest: str) -> tuple[float, ...] | None:
        return self._vectors.get(digest)

    def put(self, digest: str, vector: Sequence[float]) -> tuple[float, ...]:
        vec = tuple(float(v) for v in vector)
        with self._lock:
            if digest in self._vectors:
                return self._vectors[digest]
            self._check_dim(len(vec))
            if self.path is not None:
                line = f"{digest}\t{len(vec)}\t{','.join(repr(v) for v in vec)}\n"
                # whole-line write under the lock; readers never see a partial entry
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line)
                    fh.flush()
            self._vectors[digest] = vec
        return vec


class EmbeddingProvider:
    """Cache-first embedding lookup backed by an HTTP embeddings endpoint.

    The endpoint speaks the OpenAI embeddings shape: POST ``{"model", "input"}``
    and read ``data[0].embedding`` (a bare ``{"embedding": [...]}`` is also
    accepted). Endpoint settings default to environment variables.
    """

    def __init__(
        self,
        cache_path: str | Path | None = None,
        *,
        endpoint_url: str | None = None,
        model: str | None = None,
        credential_env: str = DEFAULT_CREDENTIAL_ENV,
        offline: bool = False,
        max_in_flight: int = 4,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.cache = EmbeddingCache(cache_path)
        self.endpoint_url = endpoint_url or os.environ.get(DEFAULT_ENDPOINT_ENV)
        self.model = model or os.environ.get(DEFAULT_MODEL_ENV)
        self.credential_env = credential_env
        self.offline = offline
        self.max_in_flight = max(1, max_in_flight)
        self.max_attempts = max(1, max_attempts)
        self.backoff_base = backoff_base
        self.timeout = timeout
        self._transport = transport
        self.network_calls = 0
        self._count_lock = threading.Lock()

    def get(self, query_text: str) -> tuple[float, ...]:
        digest = content_hash(query_text)
        cached = self.cache.get(digest)
        if cached is not None:
            return cached
        if self.offline:
            raise OfflineMissError(digest)
        return self.cache.put(digest, self._fetch(query_text))

    def get_many(self, texts: Sequence[str]) -> dict[str, tuple[float, ...]]:
        unique = list(dict.fromkeys(texts))
        if self.max_in_flight == 1 or len(unique) <= 1:
            return {t: self.get(t) for t in unique}
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            vectors = list(pool.map(self.get, unique))
        return dict(zip(unique, vectors))

    def _client(self) -> httpx.Client:
        headers = {}
        key = os.environ.get(self.credential_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return httpx.Client(timeout=self.timeout, headers=headers, transport=self._transport)

    def _fetch(self, text: str) -> list[float]:
        if not self.endpoint_url:
            raise EmbeddingError(
                f"no embedding endpoint configured (set {DEFAULT_ENDPOINT_ENV} or pass endpoint_url)"
            )
        payload = {"input": text}
        if self.model:
            payload["model"] = self.model
        last: Exception | None = None
        with self._client() as client:
            for attempt in range(self.max_attempts):
                if attempt:
                    time.sleep(self.backoff_base * 2 ** (attempt - 1))
                with self._count_lock:
                    self.network_calls += 1
                try:
                    resp = client.post(self.endpoint_url, json=payload)
                except httpx.TransportError as exc:
                    last = exc
                    continue
                if resp.status_code in (401, 403):
                    raise EmbeddingError(f"embedding endpoint rejected credentials ({resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = EmbeddingError(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise EmbeddingError(f"embedding request failed: HTTP {resp.status_code}")
                return _extract_vector(resp.json())
        raise EmbeddingError(f"embedding fetch failed after {self.max_attempts} attempts: {last}")


def _extract_vector(body: dict) -> list[float]:
    try:
        if "data" in body:
            vec = body["data"][0]["embedding"]
        else:
            vec = body["embedding"]
            if isinstance(vec, dict):  # {"embedding": {"values": [...]}}
                vec = vec["values"]
        return [float(v) for v in vec]
    except (KeyError, IndexError, TypeError, ValueError):
        raise EmbeddingError("embedding response carries no vector") from None
