"""Completion backends: an OpenAI-style HTTP chat client and an offline mock."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import requests

from .dataset import ColumnKind, format_number
from .exceptions import (
    AuthMissing,
    BackendError,
    MalformedProviderResponse,
    NoExamplesForClass,
    RateLimited,
    Timeout,
)
from .prompts import MockContext, RenderedPrompt, estimate_tokens

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "IMPUTE_FORGE_API_KEY"


class BackendKind(str, Enum):
    HTTP = "http"
    MOCK = "mock"


@dataclass
class BackendConfig:
    kind: BackendKind = BackendKind.MOCK
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_in_flight: int = 2
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    backoff_jitter: float = 0.2

    def __post_init__(self):
        self.kind = BackendKind(self.kind)
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.kind is BackendKind.HTTP and not (self.endpoint and self.model and self.api_key_env):
            raise ValueError("http backend requires endpoint, model and api_key_env")

    @classmethod
    def mock(cls) -> "BackendConfig":
        return cls(BackendKind.MOCK)

    def to_dict(self) -> dict:
        # the key itself never leaves the environment
        return {
            "kind": self.kind.value,
            "endpoint": self.endpoint,
            "model": self.model,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "timeout": self.timeout,
            "max_retries": self.max_retries,
            "api_key_env": self.api_key_env,
            "max_in_flight": self.max_in_flight,
        }


@dataclass(frozen=True)
class CompletionExchange:
    prompt_text: str
    response_text: str
    latency_ms: float
    attempt_count: int
    estimated_prompt_tokens: int
    backoff_schedule: tuple[float, ...] = field(default=())


# -- mock ----------------------------------------------------------------------

def _mode(values: Sequence[str]) -> str:
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def _lower_median(values: Sequence[str]) -> str:
    numbers = sorted(float(v) for v in values)
    return format_number(numbers[(len(numbers) - 1) // 2])


def mock_impute(examples_by_label: Mapping[str, Sequence[str]], missing_labels: Sequence[str],
                kind: ColumnKind = ColumnKind.CATEGORICAL) -> str:
    """Class-conditional mode (categorical) or lower median (numerical).

    Returns one value per line, one line per entry of ``missing_labels``.
    Mode ties resolve to the lexicographically smallest value.
    """
    kind = ColumnKind(kind)
    pick = _lower_median if kind is ColumnKind.NUMERICAL else _mode
    answers: dict[str, str] = {}
    lines = []
    for label in missing_labels:
        if label not in answers:
            values = examples_by_label.get(label) or ()
            if not values:
                raise NoExamplesForClass(f"no example values for class {label!r}")
            answers[label] = pick(list(values))
        lines.append(answers[label])
    return "\n".join(lines) + "\n"


def mock_answer(context: MockContext) -> str:
    return mock_impute(context.examples_by_label, context.missing_labels, context.kind)


# -- HTTP ----------------------------------------------------------------------

class _Retryable(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


class HttpChatClient:
    """Chat-completions client with bounded concurrency and retry/backoff.

    Parameters
    ----------
    cfg : BackendConfig
    session : requests.Session, optional
    sleep : callable
        Injected for tests; receives each backoff delay in seconds.
    rng : random.Random, optional
        Source of backoff jitter.
    """

    def __init__(self, cfg: BackendConfig, session=None, sleep: Callable[[float], None] = time.sleep,
                 rng: random.Random | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()
        self.sleep = sleep
        self.rng = rng or random.Random()
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def api_key(self) -> str:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise AuthMissing(f"environment variable {self.cfg.api_key_env} is not set")
        return key

    def payload(self, text: str) -> dict:
        return {
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": [{"role": "user", "content": text}],
        }

    def backoff(self, attempt: int) -> float:
        delay = self.cfg.backoff_base * self.cfg.backoff_factor ** attempt
        j = self.cfg.backoff_jitter
        return delay * (1.0 + self.rng.uniform(-j, j))

    def _post_once(self, key: str, body: dict) -> str:
        try:
            with self._slots:
                resp = self.session.post(
                    self.cfg.endpoint, json=body, timeout=self.cfg.timeout,
                    headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
                )
        except requests.Timeout as exc:
            raise _Retryable("timeout", str(exc)) from exc
        except requests.RequestException as exc:
            raise _Retryable("transport", str(exc)) from exc
        if resp.status_code == 429:
            raise _Retryable("rate_limited", f"HTTP 429: {resp.text[:200]}")
        if resp.status_code >= 500:
            raise _Retryable("server", f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code in (401, 403):
            raise AuthMissing(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedProviderResponse(f"unexpected response body: {resp.text[:200]}") from exc
        if not isinstance(content, str):
            raise MalformedProviderResponse("choices[0].message.content is not a string")
        return content

    def complete(self, text: str) -> CompletionExchange:
        key = self.api_key()
        body = self.payload(text)
        schedule: list[float] = []
        start = time.monotonic()
        attempt = 0
        while True:
            attempt += 1
            try:
                content = self._post_once(key, body)
                break
            except _Retryable as exc:
                if attempt > self.cfg.max_retries:
                    logger.warning("giving up after %d attempts: %s", attempt, exc)
                    if exc.kind == "timeout":
                        raise Timeout(str(exc)) from exc
                    if exc.kind == "rate_limited":
                        raise RateLimited(str(exc)) from exc
                    raise BackendError(str(exc)) from exc
                delay = self.backoff(attempt - 1)
                schedule.append(delay)
                logger.info("attempt %d failed (%s); retrying in %.2fs", attempt, exc.kind, delay)
                self.sleep(delay)
        return CompletionExchange(text, content, (time.monotonic() - start) * 1000.0, attempt,
                                  estimate_tokens(text), tuple(schedule))


_clients: dict[tuple, HttpChatClient] = {}
_clients_lock = threading.Lock()


def _client_for(cfg: BackendConfig) -> HttpChatClient:
    key = (cfg.endpoint, cfg.model, cfg.max_in_flight, cfg.api_key_env)
    with _clients_lock:
        client = _clients.get(key)
        if client is None or client.cfg != cfg:
            client = _clients[key] = HttpChatClient(cfg)
        return client


def complete(cfg: BackendConfig, prompt: RenderedPrompt, client: HttpChatClient | None = None) -> CompletionExchange:
    """Send ``prompt`` to the configured backend and return the exchange.

    The mock backend never touches the network; it answers from the
    prompt's structured context.
    """
    if cfg.kind is BackendKind.MOCK:
        start = time.monotonic()
        if prompt.context is None:
            raise NoExamplesForClass("prompt carries no example context for the mock backend")
        text = mock_answer(prompt.context)
        return CompletionExchange(prompt.text, text, (time.monotonic() - start) * 1000.0, 1,
                                  prompt.estimated_tokens)
    client = client or _client_for(cfg)
    return client.complete(prompt.text)
