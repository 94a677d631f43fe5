"""Provider-facing value types plus the ledger, rate limiter, and retry policy."""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, TypeVar

from ..errors import EmptyQuery, InvariantViolation, ProviderUnavailable

log = logging.getLogger(__name__)

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"


@dataclass
class ChatMessage:
    role: str
    content: str

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass
class ChatRequest:
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise InvariantViolation("temperature must be >= 0")

    def last_content(self) -> str:
        return self.messages[-1].content if self.messages else ""


@dataclass
class ChatResponse:
    text: str
    finish: str = FINISH_STOP


@dataclass
class SearchHit:
    title: str
    link: str
    snippet: str
    position: int

    def to_dict(self) -> dict:
        return {"title": self.title, "link": self.link, "snippet": self.snippet, "position": self.position}


@dataclass
class SearchResult:
    query: str
    hits: list[SearchHit] = field(default_factory=list)

    def __post_init__(self) -> None:
        positions = [h.position for h in self.hits]
        if positions != list(range(1, len(positions) + 1)):
            raise InvariantViolation(f"hit positions must run 1..n, got {positions}")

    def to_dict(self) -> dict:
        return {"query": self.query, "hits": [h.to_dict() for h in self.hits]}


@dataclass
class WikiEntry:
    name: str
    title: Optional[str] = None
    text: Optional[str] = None
    found: bool = True

    def to_dict(self) -> dict:
        if not self.found:
            return {"name": self.name, "not_found": True}
        return {"name": self.name, "title": self.title, "text": self.text}


EXIT_OK = "ok"
EXIT_ERROR = "error"
EXIT_TIMEOUT = "timeout"


@dataclass
class ExecLimits:
    wall_seconds: float = 10.0
    output_bytes: int = 16384

    def __post_init__(self) -> None:
        if self.wall_seconds <= 0 or self.output_bytes <= 0:
            raise InvariantViolation("execution limits must be positive")


@dataclass
class CodeResult:
    stdout: str
    stderr: str
    exit: str


class ChatProvider(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


class SearchProvider(Protocol):
    def search_one(self, query: str) -> SearchResult: ...


class FetchProvider(Protocol):
    def fetch_text(self, url: str) -> str: ...


class WikiProvider(Protocol):
    def lookup_one(self, name: str) -> WikiEntry: ...


class CodeSandbox(Protocol):
    def run(self, code: str, limits: ExecLimits) -> CodeResult: ...


class CostLedger:
    """Thread-safe per-provider call counts; one billable count per logical call."""

    def __init__(self, unit_prices: Optional[dict[str, float]] = None):
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}
        self.unit_prices = dict(unit_prices or {"search": 1.0})

    def record(self, provider: str, calls: int = 1) -> None:
        with self._lock:
            self._counts[provider] = self._counts.get(provider, 0) + calls

    def count(self, provider: str) -> int:
        with self._lock:
            return self._counts.get(provider, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self._counts.items()))


class RateLimiter:
    """Sliding one-second window; at most ``max_per_second`` acquisitions pass."""

    def __init__(
        self,
        max_per_second: float,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.max_per_second = max_per_second
        self._clock = clock
        self._sleeper = sleeper
        self._lock = threading.Lock()
        self._stamps: list[float] = []

    def acquire(self) -> None:
        if self.max_per_second <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._stamps = [s for s in self._stamps if now - s < 1.0]
                if len(self._stamps) < self.max_per_second:
                    self._stamps.append(now)
                    return
                wait = 1.0 - (now - self._stamps[0])
            self._sleeper(max(wait, 0.001))


@dataclass
class RetryPolicy:
    retries: int = 3
    base_delay: float = 0.5
    jitter: float = 0.2
    sleeper: Callable[[float], None] = time.sleep

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.base_delay * (2**attempt)
        return base * (1.0 + rng.uniform(-self.jitter, self.jitter))


T = TypeVar("T")


def call_with_retries(
    fn: Callable[[], T],
    policy: RetryPolicy,
    rng: Optional[random.Random] = None,
    description: str = "provider call",
) -> T:
    """Retry transient provider failures with exponential backoff and jitter."""
    rng = rng or random.Random()
    last: Optional[Exception] = None
    for attempt in range(policy.retries + 1):
        try:
            return fn()
        except ProviderUnavailable as exc:
            last = exc
            if attempt == policy.retries:
                break
            delay = policy.delay(attempt, rng)
            log.warning("%s failed (attempt %d): %s; retrying in %.2fs", description, attempt + 1, exc, delay)
            policy.sleeper(delay)
    raise ProviderUnavailable(f"{description} failed after {policy.retries + 1} attempts: {last}")


@dataclass
class ProviderSuite:
    """Everything a pipeline stage may talk to, behind one ledger."""

    chat: "InstrumentedChat"
    search: "SearchClient"
    fetch: "FetchClient"
    wiki: "WikiClient"
    sandbox: Optional[CodeSandbox]
    ledger: CostLedger
    summarizer: Optional["InstrumentedChat"] = None

    def summarizer_chat(self) -> "InstrumentedChat":
        """Page summarization model; falls back to the main chat provider."""
        return self.summarizer or self.chat


class InstrumentedChat:
    def __init__(
        self,
        inner: ChatProvider,
        ledger: CostLedger,
        name: str = "llm",
        retry: Optional[RetryPolicy] = None,
        limiter: Optional[RateLimiter] = None,
    ):
        self._inner = inner
        self._ledger = ledger
        self.name = name
        self._retry = retry or RetryPolicy()
        self._limiter = limiter

    def chat(self, request: ChatRequest) -> ChatResponse:
        if not request.messages:
            raise InvariantViolation("chat request must carry at least one message")

        def attempt() -> ChatResponse:
            if self._limiter is not None:
                self._limiter.acquire()
            return self._inner.chat(request)

        response = call_with_retries(attempt, self._retry, description=f"chat({self.name})")
        # Retries collapse into one billable logical call, counted on success.
        self._ledger.record(self.name)
        return response


class SearchClient:
    def __init__(
        self,
        inner: SearchProvider,
        ledger: CostLedger,
        name: str = "search",
        retry: Optional[RetryPolicy] = None,
        limiter: Optional[RateLimiter] = None,
    ):
        self._inner = inner
        self._ledger = ledger
        self.name = name
        self._retry = retry or RetryPolicy()
        self._limiter = limiter

    def search(self, queries: str | list[str]) -> list[SearchResult]:
        """One SearchResult per query, input order preserved."""
        batch = [queries] if isinstance(queries, str) else list(queries)
        for q in batch:
            if not q or not q.strip():
                raise EmptyQuery("search query must be non-empty")
        results = []
        for q in batch:

            def attempt(q: str = q) -> SearchResult:
                if self._limiter is not None:
                    self._limiter.acquire()
                return self._inner.search_one(q)

            try:
                results.append(call_with_retries(attempt, self._retry, description=f"search({self.name})"))
                self._ledger.record(self.name)
            except ProviderUnavailable as exc:
                # A failing entry must not sink the rest of the batch.
                log.warning("search for %r failed after retries: %s", q, exc)
                results.append(SearchResult(query=q, hits=[]))
        return results


class FetchClient:
    def __init__(
        self,
        inner: FetchProvider,
        ledger: CostLedger,
        name: str = "fetch",
        retry: Optional[RetryPolicy] = None,
        limiter: Optional[RateLimiter] = None,
    ):
        self._inner = inner
        self._ledger = ledger
        self.name = name
        self._retry = retry or RetryPolicy()
        self._limiter = limiter

    def fetch_and_clean(self, url: str) -> str:
        from ..htmltext import clean_html

        def attempt() -> str:
            if self._limiter is not None:
                self._limiter.acquire()
            return self._inner.fetch_text(url)

        html = call_with_retries(attempt, self._retry, description=f"fetch({self.name})")
        self._ledger.record(self.name)
        return clean_html(html)


class WikiClient:
    def __init__(self, inner: WikiProvider, ledger: CostLedger, name: str = "wiki"):
        self._inner = inner
        self._ledger = ledger
        self.name = name

    def lookup(self, entities: list[str]) -> list[WikiEntry]:
        """One entry per requested entity; misses are flagged per-entity."""
        out: list[WikiEntry] = []
        for name in entities:
            try:
                out.append(self._inner.lookup_one(name))
                self._ledger.record(self.name)
            except ProviderUnavailable as exc:
                log.warning("wiki lookup for %r failed: %s", name, exc)
                out.append(WikiEntry(name=name, found=False))
        return out
