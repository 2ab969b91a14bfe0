"""Completion providers: HTTP adapter, deterministic mock, and wrapper stack.

One call surface (``complete``) serves distillation, translation, and
judging. Wrappers compose as cache -> retry -> rate limit -> counter ->
transport, so cache hits touch no network and every live attempt is
throttled and counted.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, TypeVar

from .core import IdiomForgeError
from .jsonl import read_jsonl

log = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")

DEFAULT_PARALLELISM = 4
RETRY_MAX_ATTEMPTS = 5
RETRY_BASE_DELAY = 1.0
RETRY_FACTOR = 2.0


class ProviderError(IdiomForgeError):
    """Base for completion-provider failures."""


class TransportError(ProviderError):
    """Transient failure (network, 429, 5xx); retryable."""


class RequestRejectedError(ProviderError):
    """Non-retryable provider rejection (auth, invalid request)."""


class FixtureMissError(ProviderError):
    """Strict mock has no fixture for the requested prompt digest."""


class ConfigError(ProviderError):
    """Provider misconfiguration (missing endpoint or credential)."""


# ---------------------------------------------------------------------------
# Requests, responses, keys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model: str
    temperature: float = 0.7
    max_tokens: int = 256
    stop: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ProviderError("prompt must be non-empty")
        if not self.model:
            raise ProviderError("model must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ProviderError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ProviderError("max_tokens must be positive")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    model: str
    cached: bool = False
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ProviderError("latency_ms must be nonnegative")


def cache_key(request: CompletionRequest) -> str:
    """Content hash over every field that can change the completion.

    Temperature and max_tokens are included: generation (0.7) and judging
    (0.1) reuse prompts, and conflating them would poison the cache.
    """
    payload = json.dumps(
        {
            "max_tokens": request.max_tokens,
            "model": request.model,
            "prompt": request.prompt,
            "stop": list(request.stop),
            "temperature": request.temperature,
        },
        ensure_ascii=True,
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


def prompt_digest(prompt: str) -> str:
    """Fixture key: hash of the prompt text alone, so one fixture file can
    serve any model and temperature."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CompletionProvider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


@dataclass
class ProviderStats:
    """Counters surfaced in run logs; thread-safe via the owning lock."""

    live_calls: int = 0
    cache_hits: int = 0
    retries: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, counter: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, counter, getattr(self, counter) + by)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "live_calls": self.live_calls,
                "cache_hits": self.cache_hits,
                "retries": self.retries,
            }


# ---------------------------------------------------------------------------
# Mock provider
# ---------------------------------------------------------------------------

class MockProvider:
    """Deterministic offline provider answering from prompt-digest fixtures.

    Strict mode errors on a miss, naming the digest so the missing fixture
    can be recorded; lenient mode returns the configured sentinel.
    """

    def __init__(
        self,
        fixtures: Mapping[str, str],
        strict: bool = True,
        sentinel: str = "[no fixture]",
    ) -> None:
        self._fixtures = dict(fixtures)
        self._strict = strict
        self._sentinel = sentinel

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = prompt_digest(request.prompt)
        text = self._fixtures.get(digest)
        if text is None:
            if self._strict:
                raise FixtureMissError(f"no fixture for prompt digest {digest}")
            text = self._sentinel
        return CompletionResponse(text=text, model=request.model, cached=False, latency_ms=0)


def mock_from_fixtures(
    path: str | Path, strict: bool = True, sentinel: str = "[no fixture]"
) -> MockProvider:
    """Build a MockProvider from a JSONL fixture file.

    Rows are ``{"digest": ..., "text": ...}`` or ``{"prompt": ..., "text":
    ...}``; prompt-form rows are digested at load. Duplicate digests are a
    load error since replay would be ambiguous.
    """
    fixtures: dict[str, str] = {}
    for lineno, obj in read_jsonl(path):
        text = obj.get("text")
        if not isinstance(text, str):
            raise ProviderError(f"{path}:{lineno}: fixture needs a string 'text'")
        if "digest" in obj:
            digest = obj["digest"]
            if not isinstance(digest, str) or len(digest) != 64:
                raise ProviderError(f"{path}:{lineno}: 'digest' must be 64 hex chars")
        elif "prompt" in obj:
            digest = prompt_digest(obj["prompt"])
        else:
            raise ProviderError(f"{path}:{lineno}: fixture needs 'digest' or 'prompt'")
        if digest in fixtures:
            raise ProviderError(f"{path}:{lineno}: duplicate fixture digest {digest}")
        fixtures[digest] = text
    return MockProvider(fixtures, strict=strict, sentinel=sentinel)


class RecordingProvider:
    """Pass-through wrapper capturing (prompt, text) pairs for later replay."""

    def __init__(self, inner: CompletionProvider) -> None:
        self._inner = inner
        self._lock = threading.Lock()
        self.records: list[dict[str, str]] = []

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        response = self._inner.complete(request)
        with self._lock:
            self.records.append({"prompt": request.prompt, "text": response.text})
        return response

    def dump(self, path: str | Path) -> int:
        from .jsonl import write_jsonl

        with self._lock:
            unique: dict[str, dict[str, str]] = {rec["prompt"]: rec for rec in self.records}
        return write_jsonl(path, unique.values())


# ---------------------------------------------------------------------------
# HTTP provider
# ---------------------------------------------------------------------------

ENV_API_BASE = "IDIOMFORGE_API_BASE"
ENV_API_KEY = "IDIOMFORGE_API_KEY"
ENV_MODEL = "IDIOMFORGE_MODEL"


class HttpProvider:
    """Minimal chat-completions-style JSON POST adapter.

    The wire schema lives only here; alternative providers need only a new
    adapter class with the same ``complete`` method.
    """

    def __init__(self, api_base: str, api_key: str, timeout: float = 60.0) -> None:
        if not api_base:
            raise ConfigError("api_base must be non-empty")
        self._url = api_base.rstrip("/") + "/chat/completions"
        self._api_key = api_key
        self._timeout = timeout

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        import requests

        payload: dict[str, object] = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        started = time.monotonic()
        try:
            resp = requests.post(
                self._url,
                json=payload,
                headers={"Authorization": f"Bearer {self._api_key}"},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from None
        latency_ms = int((time.monotonic() - started) * 1000)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise RequestRejectedError(
                f"provider rejected request: HTTP {resp.status_code} {resp.text[:200]}"
            )
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise TransportError("malformed provider response body") from None
        if not isinstance(text, str):
            raise TransportError("provider response content is not a string")
        return CompletionResponse(
            text=text, model=request.model, cached=False, latency_ms=latency_ms
        )


def http_provider_from_env(env: Mapping[str, str] | None = None) -> HttpProvider:
    env = os.environ if env is None else env
    api_base = env.get(ENV_API_BASE, "")
    if not api_base:
        raise ConfigError(f"{ENV_API_BASE} is not set")
    api_key = env.get(ENV_API_KEY, "")
    if not api_key:
        raise ConfigError(f"{ENV_API_KEY} is not set")
    return HttpProvider(api_base=api_base, api_key=api_key)


def default_model(env: Mapping[str, str] | None = None) -> str | None:
    env = os.environ if env is None else env
    return env.get(ENV_MODEL) or None


# ---------------------------------------------------------------------------
# Wrappers
# ---------------------------------------------------------------------------

class CountingProvider:
    """Innermost wrapper: every call that reaches it is a live provider call."""

    def __init__(self, inner: CompletionProvider, stats: ProviderStats) -> None:
        self._inner = inner
        self._stats = stats

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._stats.bump("live_calls")
        return self._inner.complete(request)


class RateLimitedProvider:
    """Sliding-window limiter: at most ``rps`` admissions per one-second window."""

    def __init__(
        self,
        inner: CompletionProvider,
        rps: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rps <= 0:
            raise ConfigError("rps must be positive")
        self._inner = inner
        self._rps = rps
        self._clock = clock
        self._sleep = sleep
        self._admissions: deque[float] = deque()
        self._lock = threading.Lock()

    def _admit(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._admissions and self._admissions[0] <= now - 1.0:
                    self._admissions.popleft()
                if len(self._admissions) < self._rps:
                    self._admissions.append(now)
                    return
                wait = self._admissions[0] + 1.0 - now
            self._sleep(max(wait, 0.0))

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self._admit()
        return self._inner.complete(request)


class RetryingProvider:
    """Exponential backoff with full jitter over transient failures.

    Base 1s, factor 2, at most 5 attempts; rejection errors propagate
    immediately. Sleep and RNG are injectable so tests run instantly.
    """

    def __init__(
        self,
        inner: CompletionProvider,
        max_attempts: int = RETRY_MAX_ATTEMPTS,
        base_delay: float = RETRY_BASE_DELAY,
        factor: float = RETRY_FACTOR,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        stats: ProviderStats | None = None,
    ) -> None:
        if max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        self._inner = inner
        self._max_attempts = max_attempts
        self._base_delay = base_delay
        self._factor = factor
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._stats = stats

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        last: TransportError | None = None
        for attempt in range(self._max_attempts):
            try:
                return self._inner.complete(request)
            except TransportError as exc:
                last = exc
                if attempt == self._max_attempts - 1:
                    break
                if self._stats is not None:
                    self._stats.bump("retries")
                ceiling = self._base_delay * self._factor**attempt
                self._sleep(self._rng.uniform(0.0, ceiling))
        raise TransportError(
            f"exhausted {self._max_attempts} attempts: {last}"
        ) from None


class CachingProvider:
    """On-disk response cache: ``<cache_dir>/<first 2 hex>/<digest>.json``.

    Responses at temperature > 0 are cached too; a given run's outputs stay
    reproducible, and ``--no-cache`` opts out at the CLI. Concurrent writers
    race benignly: first-persisted wins, later writers adopt the stored text.
    """

    def __init__(
        self,
        inner: CompletionProvider,
        cache_dir: str | Path,
        stats: ProviderStats | None = None,
    ) -> None:
        self._inner = inner
        self._dir = Path(cache_dir)
        self._stats = stats

    def _path(self, digest: str) -> Path:
        return self._dir / digest[:2] / f"{digest}.json"

    @staticmethod
    def _read(path: Path) -> dict | None:
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            log.warning("discarding unreadable cache file %s", path)
            return None
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            log.warning("discarding malformed cache file %s", path)
            return None
        return payload

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = cache_key(request)
        path = self._path(digest)
        payload = self._read(path)
        if payload is not None:
            if self._stats is not None:
                self._stats.bump("cache_hits")
            return CompletionResponse(
                text=payload["text"],
                model=payload.get("model", request.model),
                cached=True,
                latency_ms=0,
            )
        response = self._inner.complete(request)
        stored = self._store(path, {"model": response.model, "text": response.text})
        if stored["text"] != response.text:
            # Lost a write race; honor the persisted response.
            return CompletionResponse(
                text=stored["text"], model=stored.get("model", response.model),
                cached=True, latency_ms=response.latency_ms,
            )
        return response

    def _store(self, path: Path, payload: dict) -> dict:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
        tmp.write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8"
        )
        try:
            os.link(tmp, path)  # atomic create-if-absent; loser keeps the winner's file
        except FileExistsError:
            existing = self._read(path)
            if existing is not None:
                payload = existing
        except OSError:
            os.replace(tmp, path)
            return payload
        tmp.unlink(missing_ok=True)
        return payload


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def build_provider_stack(
    transport: CompletionProvider,
    stats: ProviderStats,
    cache_dir: str | Path | None = None,
    rps: float | None = None,
    retry: bool = True,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> CompletionProvider:
    """Wrap a transport in counter, rate limit, retry, and cache layers.

    Order matters: cache sits outermost so hits skip throttling and retries;
    the counter sits innermost so ``stats.live_calls`` counts exactly the
    calls that reach the transport.
    """
    provider: CompletionProvider = CountingProvider(transport, stats)
    if rps is not None:
        provider = RateLimitedProvider(provider, rps=rps, sleep=sleep)
    if retry:
        provider = RetryingProvider(provider, sleep=sleep, rng=rng, stats=stats)
    if cache_dir is not None:
        provider = CachingProvider(provider, cache_dir, stats=stats)
    return provider


def parallel_map(
    fn: Callable[[T], U], items: Iterable[T], parallelism: int = DEFAULT_PARALLELISM
) -> list[U]:
    """Apply ``fn`` over ``items`` with bounded concurrency, preserving order."""
    items = list(items)
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))
