"""Deterministic offline adapters: fixture tables, handlers, and a flaky shim."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Callable, Optional

from ..errors import ProviderUnavailable
from ..records import canonical_json
from .base import (
    ChatRequest,
    ChatResponse,
    CodeResult,
    EXIT_ERROR,
    EXIT_OK,
    ExecLimits,
    SearchHit,
    SearchResult,
    WikiEntry,
)

FALLBACK_ERROR = "error"
FALLBACK_ECHO = "echo"

ChatHandler = Callable[[ChatRequest], Optional[str]]


def request_hash(request: ChatRequest) -> str:
    payload = {
        "messages": [m.to_dict() for m in request.messages],
        "temperature": request.temperature,
        "max_output_tokens": request.max_output_tokens,
    }
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def load_fixture_table(path: str | Path) -> dict[str, str]:
    table: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            table[row["request_hash"]] = row["response"]
    return table


class MockChatProvider:
    """Resolves by request hash against a fixture table, then by handlers.

    Handlers make the synthetic offline world possible: each recognizes one
    prompt family and produces a response that is a pure function of the
    request content, so replies are byte-identical across runs and schedules.
    """

    def __init__(
        self,
        fixtures: Optional[dict[str, str]] = None,
        handlers: Optional[list[ChatHandler]] = None,
        fallback: str = FALLBACK_ERROR,
    ):
        self.fixtures = dict(fixtures or {})
        self.handlers = list(handlers or [])
        self.fallback = fallback

    def chat(self, request: ChatRequest) -> ChatResponse:
        digest = request_hash(request)
        if digest in self.fixtures:
            return ChatResponse(text=self.fixtures[digest])
        for handler in self.handlers:
            reply = handler(request)
            if reply is not None:
                return ChatResponse(text=reply)
        if self.fallback == FALLBACK_ECHO:
            return ChatResponse(text=f"[mock-echo {digest[:12]}]")
        raise ProviderUnavailable(f"no mock fixture for request {digest[:12]}")


class ScriptedChatProvider:
    """Plays back a fixed response sequence; for protocol and retry tests."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self.calls = 0

    def chat(self, request: ChatRequest) -> ChatResponse:
        if self.calls >= len(self._responses):
            raise ProviderUnavailable("scripted provider ran out of responses")
        text = self._responses[self.calls]
        self.calls += 1
        return ChatResponse(text=text)


class FlakyChatProvider:
    """Fails the first ``fail_times`` calls, then delegates."""

    def __init__(self, inner, fail_times: int):
        self._inner = inner
        self.fail_times = fail_times
        self.attempts = 0

    def chat(self, request: ChatRequest) -> ChatResponse:
        self.attempts += 1
        if self.attempts <= self.fail_times:
            raise ProviderUnavailable(f"scripted transient failure {self.attempts}")
        return self._inner.chat(request)


class MockSearchProvider:
    def __init__(self, pages: Optional[dict[str, list[dict]]] = None, generator=None):
        self.pages = dict(pages or {})
        self.generator = generator

    def search_one(self, query: str) -> SearchResult:
        if query in self.pages:
            rows = self.pages[query]
        elif self.generator is not None:
            rows = self.generator(query)
        else:
            rows = []
        hits = [
            SearchHit(
                title=row["title"],
                link=row["link"],
                snippet=row.get("snippet", ""),
                position=i + 1,
            )
            for i, row in enumerate(rows)
        ]
        return SearchResult(query=query, hits=hits)


class MockFetchProvider:
    def __init__(self, pages: Optional[dict[str, str]] = None, generator=None):
        self.pages = dict(pages or {})
        self.generator = generator

    def fetch_text(self, url: str) -> str:
        if url in self.pages:
            return self.pages[url]
        if self.generator is not None:
            return self.generator(url)
        raise ProviderUnavailable(f"no mock page for {url}")


class MockWikiProvider:
    def __init__(self, articles: Optional[dict[str, str]] = None, generator=None):
        self.articles = dict(articles or {})
        self.generator = generator

    def lookup_one(self, name: str) -> WikiEntry:
        if name in self.articles:
            return WikiEntry(name=name, title=name, text=self.articles[name])
        if self.generator is not None:
            text = self.generator(name)
            if text is not None:
                return WikiEntry(name=name, title=name, text=text)
        return WikiEntry(name=name, found=False)


class MockSandbox:
    """Canned execution results keyed by exact code string."""

    def __init__(self, results: Optional[dict[str, CodeResult]] = None):
        self.results = dict(results or {})

    def run(self, code: str, limits: ExecLimits) -> CodeResult:
        if code in self.results:
            return self.results[code]
        return CodeResult(stdout="", stderr="mock sandbox has no script for this code", exit=EXIT_ERROR)


def immediate_ok(stdout: str) -> CodeResult:
    return CodeResult(stdout=stdout, stderr="", exit=EXIT_OK)
