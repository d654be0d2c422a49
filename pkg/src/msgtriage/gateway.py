"""Uniform client for chat-completion model backends.

Every registered model sits behind the same request shape (system + user
message in, one text answer out), so a single gateway covers flagship,
mini/nano, open-source, and router endpoints alike. The gateway owns retries
with exponential backoff, per-model rate limiting and concurrency bounds, and
latency accounting across attempts. A deterministic in-process mock backend
(selected by the mock:// endpoint scheme) makes every pipeline runnable with
no network and no credentials.

Secret material is resolved from the environment at request time via the
spec's authRef name and never stored, logged, or serialized.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence
from urllib.parse import parse_qs, urlparse

import httpx

from .corpus import Corpus
from .taxonomy import OTHER_LABEL

logger = logging.getLogger(__name__)

SIZE_CLASSES = ("flagship", "mini", "nano", "open-source", "router")


class GatewayError(Exception):
    """Base for all completion failures surfaced to callers."""


class NonRetryableError(GatewayError):
    """Auth failure, bad request, or unresolvable configuration."""


class RetryExhaustedError(GatewayError):
    """Transient failures persisted through the attempt cap."""


class GatewayTimeoutError(GatewayError):
    """Every attempt timed out."""


# Backend-internal failures; the gateway maps them onto the public kinds.
class _TransientFailure(Exception):
    def __init__(self, message: str, latency: float = 0.0):
        super().__init__(message)
        self.latency = latency


class _TimeoutFailure(_TransientFailure):
    pass


class _PermanentFailure(Exception):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """One registry entry; authRef names an environment variable, never a secret."""

    name: str
    family: str
    size_class: str
    endpoint_url: str
    auth_ref: str | None = None
    temperature: float | None = None  # omitted from requests when unset
    max_output_tokens: int | None = None
    request_timeout: float = 30.0
    rate_limit_per_s: float | None = None
    max_concurrency: int = 4
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if self.size_class not in SIZE_CLASSES:
            raise ValueError(
                f"model {self.name!r}: sizeClass {self.size_class!r} not in {SIZE_CLASSES}"
            )
        if self.request_timeout <= 0:
            raise ValueError(f"model {self.name!r}: requestTimeout must be > 0")
        if self.max_attempts < 1:
            raise ValueError(f"model {self.name!r}: maxAttempts must be >= 1")


@dataclass(frozen=True)
class CompletionResult:
    text: str  # may be empty; downstream parsing handles it
    latency: float  # seconds, summed over all attempts of this completion
    attempts: int
    token_usage: tuple[int, int] | None = None  # (prompt, output) when reported


@dataclass(frozen=True)
class BackendReply:
    text: str
    token_usage: tuple[int, int] | None = None
    latency: float | None = None  # simulated latency; None = measure wall clock


class Backend(Protocol):
    def send(
        self, spec: ModelSpec, system: str, user: str, tag: str | None, attempt: int
    ) -> BackendReply: ...


def load_registry(path: str | Path) -> list[ModelSpec]:
    """Read the model registry JSON file into validated specs."""
    try:
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise NonRetryableError(f"cannot read registry {path}: {exc}") from exc
    specs: list[ModelSpec] = []
    names: set[str] = set()
    for entry in entries:
        sampling = entry.get("sampling") or {}
        spec = ModelSpec(
            name=entry["name"],
            family=entry.get("family", ""),
            size_class=entry.get("sizeClass", "flagship"),
            endpoint_url=entry["endpointUrl"],
            auth_ref=entry.get("authRef"),
            temperature=sampling.get("temperature", None),
            max_output_tokens=sampling.get("maxOutputTokens"),
            request_timeout=float(entry.get("requestTimeoutS", 30.0)),
            rate_limit_per_s=entry.get("rateLimitPerS"),
            max_concurrency=int(entry.get("maxConcurrency", 4)),
            max_attempts=int(entry.get("maxAttempts", 3)),
        )
        if spec.name in names:
            raise NonRetryableError(f"duplicate model name in registry: {spec.name!r}")
        names.add(spec.name)
        specs.append(spec)
    return specs


def default_registry_path() -> Path:
    return Path(__file__).parent / "data" / "registry.json"


def _simulated_latency(model: str, user: str, attempt: int, base_ms: float) -> float:
    # Stable across runs and processes (not Python's randomized hash).
    digest = hashlib.md5(f"{model}|{user}|{attempt}".encode("utf-8")).digest()
    jitter = int.from_bytes(digest[:4], "big") % max(int(base_ms), 1)
    return (base_ms + jitter) / 1000.0


@dataclass
class MockRequest:
    model: str
    system: str
    user: str
    tag: str | None
    attempt: int
    started_at: float
    outcome: str  # ok | fail | timeout | deny


class MockBackend:
    """Deterministic stand-in for a model endpoint.

    Behaviors:
      - fixed text: every call answers the same string.
      - replay: answers are looked up by which known message body occurs in
        the rendered prompt (longest match wins); misses get default_text.
      - script: a per-call sequence of ok/fail/timeout/deny tokens, consumed
        once and then ok forever; always_fail shortcuts to endless failure.

    Every request (including retried attempts) is appended to .requests so
    tests can assert call counts and rate-limit windows. Reported latencies
    are simulated deterministically from the request content, which keeps
    outcome artifacts byte-identical across runs and worker counts.
    """

    def __init__(
        self,
        *,
        fixed_text: str | None = None,
        replay: Mapping[str, str] | None = None,
        default_text: str = OTHER_LABEL,
        script: Sequence[str] | None = None,
        always_fail: bool = False,
        base_latency_ms: float = 80.0,
        clock: Callable[[], float] = time.monotonic,
    ):
        self._fixed_text = fixed_text
        self._probes = None
        if replay is not None:
            # Longer probes first so a body embedded in another never wins.
            self._probes = sorted(
                ((p, t) for p, t in replay.items() if p),
                key=lambda kv: (-len(kv[0]), kv[0]),
            )
        self._default_text = default_text
        self._script = list(script or [])
        self._always_fail = always_fail
        self._base_latency_ms = base_latency_ms
        self._clock = clock
        self._lock = threading.Lock()
        self.requests: list[MockRequest] = []

    @classmethod
    def fixed(cls, text: str, **kwargs) -> "MockBackend":
        return cls(fixed_text=text, **kwargs)

    @classmethod
    def replay_map(
        cls, answers: Mapping[str, str], bodies: Mapping[str, str], **kwargs
    ) -> "MockBackend":
        """answers: messageKey -> text; bodies: messageKey -> body text."""
        probes = {}
        for key, text in answers.items():
            body = bodies.get(key)
            if body:
                probes[body] = text
        return cls(replay=probes, **kwargs)

    @classmethod
    def replay_gold(cls, corpus: Corpus, gold: Mapping[str, str], **kwargs) -> "MockBackend":
        bodies = {m.message_id: m.body for m in corpus.messages}
        return cls.replay_map(gold, bodies, **kwargs)

    def _resolve_text(self, user: str) -> str:
        if self._fixed_text is not None:
            return self._fixed_text
        if self._probes is not None:
            for probe, text in self._probes:
                if probe in user:
                    return text
            return self._default_text
        return self._default_text

    def send(
        self, spec: ModelSpec, system: str, user: str, tag: str | None, attempt: int
    ) -> BackendReply:
        latency = _simulated_latency(spec.name, user, attempt, self._base_latency_ms)
        with self._lock:
            if self._always_fail:
                step = "fail"
            elif self._script:
                step = self._script.pop(0)
            else:
                step = "ok"
            self.requests.append(
                MockRequest(
                    model=spec.name,
                    system=system,
                    user=user,
                    tag=tag,
                    attempt=attempt,
                    started_at=self._clock(),
                    outcome=step,
                )
            )
        if step == "fail":
            raise _TransientFailure("scripted transient failure", latency=latency)
        if step == "timeout":
            raise _TimeoutFailure("scripted timeout", latency=latency)
        if step == "deny":
            raise _PermanentFailure("scripted rejection")
        text = self._resolve_text(user)
        usage = (max(len(user) // 4, 1), max(len(text) // 4, 1))
        return BackendReply(text=text, token_usage=usage, latency=latency)

    @classmethod
    def from_url(cls, url: str) -> "MockBackend":
        parsed = urlparse(url)
        params = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        kind = parsed.netloc or parsed.path.lstrip("/")
        base_ms = float(params.get("latencyMs", 80.0))
        if kind == "fixed":
            return cls(fixed_text=params.get("text", OTHER_LABEL), base_latency_ms=base_ms)
        if kind == "replay":
            file = params.get("file")
            if not file:
                raise NonRetryableError("mock://replay requires a ?file= parameter")
            data = json.loads(Path(file).read_text(encoding="utf-8"))
            return cls(
                replay=data.get("answers", data),
                default_text=data.get("default", OTHER_LABEL) if "answers" in data else OTHER_LABEL,
                base_latency_ms=base_ms,
            )
        if kind == "fail":
            return cls(always_fail=True, base_latency_ms=base_ms)
        if kind == "script":
            steps = [s for s in params.get("steps", "").split(",") if s]
            return cls(script=steps, fixed_text=params.get("text"), base_latency_ms=base_ms)
        raise NonRetryableError(f"unknown mock backend kind: {kind!r}")


class HttpChatBackend:
    """chat-completions style HTTP backend shared across registry entries."""

    def __init__(self, client: httpx.Client | None = None):
        self._client = client or httpx.Client()

    def send(
        self, spec: ModelSpec, system: str, user: str, tag: str | None, attempt: int
    ) -> BackendReply:
        headers = {}
        if spec.auth_ref:
            token = os.environ.get(spec.auth_ref)
            if not token:
                raise _PermanentFailure(
                    f"credentials not resolvable: environment variable "
                    f"{spec.auth_ref} is unset"
                )
            headers["Authorization"] = f"Bearer {token}"
        payload: dict = {
            "model": spec.name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        # Reasoning-class models reject sampling parameters; omit when unset.
        if spec.temperature is not None:
            payload["temperature"] = spec.temperature
        if spec.max_output_tokens is not None:
            payload["max_tokens"] = spec.max_output_tokens
        try:
            response = self._client.post(
                spec.endpoint_url, json=payload, headers=headers, timeout=spec.request_timeout
            )
        except httpx.TimeoutException as exc:
            raise _TimeoutFailure(f"request timed out after {spec.request_timeout}s") from exc
        except httpx.HTTPError as exc:
            raise _TransientFailure(f"transport error: {exc}") from exc

        if response.status_code == 429 or response.status_code >= 500:
            raise _TransientFailure(f"retryable status {response.status_code}")
        if response.status_code >= 400:
            raise _PermanentFailure(f"rejected with status {response.status_code}")
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise _TransientFailure(f"malformed response body: {exc}") from exc
        usage = None
        if isinstance(data.get("usage"), dict):
            usage = (
                int(data["usage"].get("prompt_tokens", 0)),
                int(data["usage"].get("completion_tokens", 0)),
            )
        return BackendReply(text=text, token_usage=usage, latency=None)


class SlidingWindowLimiter:
    """At most `limit` request starts inside any 1-second window."""

    def __init__(
        self,
        limit: float | None,
        clock: Callable[[], float],
        sleeper: Callable[[float], None],
    ):
        self._limit = int(limit) if limit else None
        self._clock = clock
        self._sleeper = sleeper
        self._starts: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self._limit is None:
            return
        while True:
            with self._lock:
                now = self._clock()
                while self._starts and self._starts[0] <= now - 1.0:
                    self._starts.popleft()
                if len(self._starts) < self._limit:
                    self._starts.append(now)
                    return
                wait = self._starts[0] + 1.0 - now
            self._sleeper(max(wait, 1e-4))


class Gateway:
    """Thread-safe completion front door over the model registry."""

    def __init__(
        self,
        specs: Iterable[ModelSpec],
        backends: Mapping[str, Backend] | None = None,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.25,
    ):
        self._specs: dict[str, ModelSpec] = {}
        for spec in specs:
            if spec.name in self._specs:
                raise NonRetryableError(f"duplicate model name: {spec.name!r}")
            self._specs[spec.name] = spec
        self._backends: dict[str, Backend] = dict(backends or {})
        self._clock = clock
        self._sleeper = sleeper
        self._backoff_base = backoff_base
        self._http_backend: HttpChatBackend | None = None
        self._limiters: dict[str, SlidingWindowLimiter] = {}
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._lock = threading.Lock()

    @property
    def model_names(self) -> list[str]:
        return list(self._specs)

    def spec(self, name: str) -> ModelSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise NonRetryableError(f"model {name!r} is not in the registry") from None

    def register_backend(self, name: str, backend: Backend) -> None:
        self._backends[name] = backend

    def backend_for(self, name: str) -> Backend:
        spec = self.spec(name)
        with self._lock:
            if name in self._backends:
                return self._backends[name]
            scheme = urlparse(spec.endpoint_url).scheme
            if scheme == "mock":
                backend: Backend = MockBackend.from_url(spec.endpoint_url)
                self._backends[name] = backend
                return backend
            if scheme in ("http", "https"):
                if self._http_backend is None:
                    self._http_backend = HttpChatBackend()
                return self._http_backend
            raise NonRetryableError(
                f"model {name!r} has unsupported endpoint scheme {scheme!r}"
            )

    def _limiter(self, spec: ModelSpec) -> SlidingWindowLimiter:
        with self._lock:
            if spec.name not in self._limiters:
                self._limiters[spec.name] = SlidingWindowLimiter(
                    spec.rate_limit_per_s, self._clock, self._sleeper
                )
            return self._limiters[spec.name]

    def _semaphore(self, spec: ModelSpec) -> threading.BoundedSemaphore:
        with self._lock:
            if spec.name not in self._semaphores:
                self._semaphores[spec.name] = threading.BoundedSemaphore(
                    max(spec.max_concurrency, 1)
                )
            return self._semaphores[spec.name]

    def complete(
        self, model: str | ModelSpec, system: str, user: str, tag: str | None = None
    ) -> CompletionResult:
        """One logical completion; transient failures retried up to the cap.

        Latency accumulates across every attempt, so the value summed by the
        evaluation layer reflects what the caller actually waited.
        """
        spec = model if isinstance(model, ModelSpec) else self.spec(model)
        if spec.name not in self._specs:
            raise NonRetryableError(f"model {spec.name!r} is not in the registry")
        backend = self.backend_for(spec.name)
        limiter = self._limiter(spec)
        semaphore = self._semaphore(spec)

        total_latency = 0.0
        last_failure: _TransientFailure | None = None
        with semaphore:
            for attempt in range(1, spec.max_attempts + 1):
                limiter.acquire()
                started = self._clock()
                try:
                    reply = backend.send(spec, system, user, tag, attempt)
                except _PermanentFailure as exc:
                    raise NonRetryableError(str(exc)) from exc
                except _TransientFailure as exc:
                    elapsed = exc.latency if exc.latency else self._clock() - started
                    total_latency += elapsed
                    last_failure = exc
                    if attempt < spec.max_attempts:
                        self._sleeper(self._backoff_base * (2 ** (attempt - 1)))
                    continue
                elapsed = reply.latency if reply.latency is not None else self._clock() - started
                total_latency += elapsed
                return CompletionResult(
                    text=reply.text,
                    latency=total_latency,
                    attempts=attempt,
                    token_usage=reply.token_usage,
                )

        if isinstance(last_failure, _TimeoutFailure):
            raise GatewayTimeoutError(
                f"{spec.name}: all {spec.max_attempts} attempts timed out"
            )
        raise RetryExhaustedError(
            f"{spec.name}: gave up after {spec.max_attempts} attempts "
            f"(last failure: {last_failure})"
        )
