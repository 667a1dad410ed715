"""Provider clients for chat and embedding backends, with a replay cache.

Every outbound call is keyed by a content hash of its inputs and stored in a
write-once file cache, so a warm cache replays an entire pipeline run with
zero network traffic. Fixture backends (canned chat responses, hash-seeded
embeddings) are first-class citizens: the whole test suite runs against them.

Credentials come from environment variables and are never written to the
cache or logs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    ProviderUnavailable,
    TransientProviderError,
)
from .retrieval import Embedding

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "REVMATCH_ENDPOINT"
API_KEY_ENV = "REVMATCH_API_KEY"


def make_idempotency_key(
    model_id: str,
    prompt: str,
    temperature: float,
    template_version: str,
    repeat_index: int,
) -> str:
    payload = json.dumps(
        [model_id, prompt, temperature, template_version, repeat_index],
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def embed_item_key(model_id: str, text: str, provider_fingerprint: str = "") -> str:
    payload = json.dumps(
        ["embed", provider_fingerprint, model_id, text], ensure_ascii=True, separators=(",", ":")
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    prompt: str
    temperature: float = 0.0
    max_output: int = 1024
    idempotency_key: str = ""


@dataclass(frozen=True)
class CacheStats:
    hits: int = 0
    misses: int = 0
    writes: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "writes": self.writes}


class ResponseCache:
    """Content-addressed, write-once file cache under ``root``.

    Layout: ``<root>/<first two key chars>/<key>.entry``. Each entry holds a
    one-line JSON header ({"provider", "created_at"}) followed by the payload
    verbatim. Existing entries are never rewritten; a colliding write with a
    different payload is dropped with a warning.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0
        self._writes = 0

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.entry"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            blob = path.read_text(encoding="utf-8")
        except OSError:
            with self._lock:
                self._misses += 1
            return None
        with self._lock:
            self._hits += 1
        _, _, payload = blob.partition("\n")
        return payload

    def put(self, key: str, payload: str, provider: str) -> None:
        path = self._path(key)
        with self._lock:
            if path.exists():
                existing = path.read_text(encoding="utf-8").partition("\n")[2]
                if existing != payload:
                    logger.warning("cache key %s already holds a different payload; keeping original", key)
                return
            header = json.dumps({"provider": provider, "created_at": time.time()})
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_text(header + "\n" + payload, encoding="utf-8")
                os.replace(tmp, path)
                self._writes += 1
            except OSError as exc:
                logger.warning("cache write for %s failed: %s", key, exc)

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(self._hits, self._misses, self._writes)


class MemoryCache(ResponseCache):
    """Dict-backed cache with the same interface, for tests and dry runs."""

    def __init__(self):
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0
        self._writes = 0

    def get(self, key: str) -> str | None:
        with self._lock:
            if key in self._entries:
                self._hits += 1
                return self._entries[key]
            self._misses += 1
            return None

    def put(self, key: str, payload: str, provider: str) -> None:
        with self._lock:
            if key in self._entries:
                if self._entries[key] != payload:
                    logger.warning("cache key %s already holds a different payload; keeping original", key)
                return
            self._entries[key] = payload
            self._writes += 1


# ---------------------------------------------------------------------------
# Chat

class ChatProvider(Protocol):
    name: str

    def send(self, req: ChatRequest) -> str: ...


class FixtureChat:
    """Canned chat responses keyed by idempotency key."""

    name = "fixture-chat"
    requires_network = False

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)

    @classmethod
    def from_file(cls, path) -> "FixtureChat":
        responses = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                responses[record["key"]] = record["response"]
        return cls(responses)

    def send(self, req: ChatRequest) -> str:
        try:
            return self.responses[req.idempotency_key]
        except KeyError:
            raise ProviderUnavailable(
                f"no fixture response for key {req.idempotency_key[:12]}..."
            ) from None


class HttpChatProvider:
    """Minimal OpenAI-style chat completion transport."""

    name = "http-chat"
    requires_network = True

    def __init__(self, endpoint: str | None = None, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        if not self.endpoint:
            raise ProviderUnavailable(f"no chat endpoint configured (set {ENDPOINT_ENV})")

    def send(self, req: ChatRequest) -> str:
        import requests

        body = {
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                f"{self.endpoint.rstrip('/')}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"chat request failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"chat endpoint returned {response.status_code}")
        if response.status_code != 200:
            raise ProviderUnavailable(f"chat endpoint returned {response.status_code}: {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderUnavailable(f"unexpected chat response shape: {exc}") from exc


class ChatClient:
    """Caching, retrying wrapper every chat call goes through."""

    def __init__(
        self,
        provider: ChatProvider,
        cache: ResponseCache,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        call_ceiling: int | None = None,
        offline: bool = False,
        sleep=time.sleep,
    ):
        self.provider = provider
        self.cache = cache
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.call_ceiling = call_ceiling
        # Offline only forbids providers that would touch the network;
        # fixture and hash backends stay usable with a cold cache.
        self.offline = offline and getattr(provider, "requires_network", True)
        self._sleep = sleep
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls_made(self) -> int:
        return self._calls

    def complete(self, req: ChatRequest) -> str:
        if not req.idempotency_key:
            raise ValueError("chat request is missing an idempotency key")
        cached = self.cache.get(req.idempotency_key)
        if cached is not None:
            return cached
        if self.offline:
            raise ProviderUnavailable("offline mode: cold cache and network calls are forbidden")

        with self._lock:
            if self.call_ceiling is not None and self._calls >= self.call_ceiling:
                raise BudgetExceeded(f"chat call ceiling {self.call_ceiling} reached")
            self._calls += 1

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                text = self.provider.send(req)
                self.cache.put(req.idempotency_key, text, self.provider.name)
                return text
            except TransientProviderError as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base * (2**attempt)
                    logger.warning(
                        "transient provider failure (attempt %d/%d), backing off %.2fs: %s",
                        attempt + 1,
                        self.max_attempts,
                        delay,
                        exc,
                    )
                    self._sleep(delay)
        raise ProviderUnavailable(
            f"chat call failed after {self.max_attempts} attempts"
        ) from last_error


# ---------------------------------------------------------------------------
# Embeddings

class EmbedProvider(Protocol):
    name: str

    def embed_batch(self, texts: Sequence[str], model_id: str) -> list[list[float]]: ...


class HashEmbed:
    """Deterministic pseudo-random unit-direction vectors seeded by text hash.

    Identical texts always map to identical vectors; distinct texts are
    near-orthogonal at reasonable dimensionality. Purely an offline stand-in
    for a dense encoder, but it preserves exactly the properties the
    pipeline's math relies on.
    """

    name = "hash-embed"
    requires_network = False

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 2:
            raise ValueError("embedding dim must be >= 2")
        self.dim = dim
        self.seed = seed

    @property
    def fingerprint(self) -> str:
        # Part of the cache key: changing dim or seed must not replay stale vectors.
        return f"{self.name}:d{self.dim}:s{self.seed}"

    def embed_batch(self, texts: Sequence[str], model_id: str) -> list[list[float]]:
        out = []
        for text in texts:
            digest = hashlib.sha256(f"{self.seed}\x1f{model_id}\x1f{text}".encode("utf-8")).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            out.append([rng.gauss(0.0, 1.0) for _ in range(self.dim)])
        return out


class HttpEmbedProvider:
    """Minimal OpenAI-style embeddings transport."""

    name = "http-embed"
    requires_network = True

    def __init__(self, endpoint: str | None = None, api_key: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        if not self.endpoint:
            raise ProviderUnavailable(f"no embedding endpoint configured (set {ENDPOINT_ENV})")

    def embed_batch(self, texts: Sequence[str], model_id: str) -> list[list[float]]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                f"{self.endpoint.rstrip('/')}/embeddings",
                json={"model": model_id, "input": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"embedding request failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"embedding endpoint returned {response.status_code}")
        if response.status_code != 200:
            raise ProviderUnavailable(
                f"embedding endpoint returned {response.status_code}: {response.text[:200]}"
            )
        try:
            data = response.json()["data"]
            return [item["embedding"] for item in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderUnavailable(f"unexpected embedding response shape: {exc}") from exc


class EmbedClient:
    """Caching embedding client with per-item dedup inside a batch."""

    def __init__(
        self,
        provider: EmbedProvider,
        cache: ResponseCache,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        call_ceiling: int | None = None,
        offline: bool = False,
        sleep=time.sleep,
    ):
        self.provider = provider
        self.cache = cache
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.call_ceiling = call_ceiling
        self.offline = offline and getattr(provider, "requires_network", True)
        self._sleep = sleep
        self._calls = 0
        self._dim: int | None = None
        self._lock = threading.Lock()

    @property
    def calls_made(self) -> int:
        return self._calls

    def embed(
        self,
        texts: Sequence[str],
        model_id: str,
        subject_ids: Sequence[str] | None = None,
    ) -> list[Embedding]:
        """Embed texts in order, returning l2-normalized vectors."""
        if subject_ids is not None and len(subject_ids) != len(texts):
            raise ValueError("subject_ids must align with texts")
        raw = self.embed_raw(texts, model_id)
        return [
            Embedding.normalized(subject_ids[index] if subject_ids is not None else "", vector)
            for index, vector in enumerate(raw)
        ]

    def embed_raw(self, texts: Sequence[str], model_id: str) -> list[list[float]]:
        """Pre-normalization vectors in text order (this is what gets cached).

        Repeated texts in one batch are sent to the provider once.
        """
        if not texts:
            raise ValueError("embed() requires a non-empty list of texts")

        fingerprint = getattr(self.provider, "fingerprint", self.provider.name)
        keys = [embed_item_key(model_id, text, fingerprint) for text in texts]
        raw_by_key: dict[str, list[float]] = {}
        pending: dict[str, str] = {}
        for key, text in zip(keys, texts):
            if key in raw_by_key or key in pending:
                continue
            cached = self.cache.get(key)
            if cached is not None:
                raw_by_key[key] = json.loads(cached)
            else:
                pending[key] = text

        if pending:
            if self.offline:
                raise ProviderUnavailable("offline mode: cold cache and network calls are forbidden")
            with self._lock:
                if self.call_ceiling is not None and self._calls >= self.call_ceiling:
                    raise BudgetExceeded(f"embedding call ceiling {self.call_ceiling} reached")
                self._calls += 1
            pending_keys = list(pending)
            vectors = self._call_with_retry([pending[k] for k in pending_keys], model_id)
            if len(vectors) != len(pending_keys):
                raise ProviderUnavailable(
                    f"provider returned {len(vectors)} vectors for {len(pending_keys)} texts"
                )
            for key, vector in zip(pending_keys, vectors):
                self.cache.put(key, json.dumps(vector), self.provider.name)
                raw_by_key[key] = vector

        out: list[list[float]] = []
        for key in keys:
            vector = raw_by_key[key]
            if self._dim is None:
                self._dim = len(vector)
            elif len(vector) != self._dim:
                raise DimensionMismatch(
                    f"provider dimensionality changed mid-run: {self._dim} -> {len(vector)}"
                )
            out.append(vector)
        return out

    def _call_with_retry(self, texts: list[str], model_id: str) -> list[list[float]]:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return self.provider.embed_batch(texts, model_id)
            except TransientProviderError as exc:
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base * (2**attempt)
                    logger.warning(
                        "transient embedding failure (attempt %d/%d), backing off %.2fs: %s",
                        attempt + 1,
                        self.max_attempts,
                        delay,
                        exc,
                    )
                    self._sleep(delay)
        raise ProviderUnavailable(
            f"embedding call failed after {self.max_attempts} attempts"
        ) from last_error


def combined_stats(*caches: ResponseCache) -> CacheStats:
    """Aggregate hit/miss/write counters across caches (deduplicated)."""
    seen: list[ResponseCache] = []
    for cache in caches:
        if all(cache is not other for other in seen):
            seen.append(cache)
    hits = misses = writes = 0
    for cache in seen:
        stats = cache.stats()
        hits += stats.hits
        misses += stats.misses
        writes += stats.writes
    return CacheStats(hits, misses, writes)
