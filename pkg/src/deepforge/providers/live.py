"""Live JSON-over-HTTPS adapters for operator-configured endpoints.

Keys come from the environment: DF_LLM_API_KEY, DF_SEARCH_API_KEY,
DF_FETCH_API_KEY. These adapters are deliberately thin; retries, rate
limiting, and accounting live in the instrumented wrappers.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.parse
import urllib.request

from ..errors import ContextOverflow, FetchFailure, NonHtmlContent, ProviderUnavailable
from .base import (
    ChatRequest,
    ChatResponse,
    FINISH_LENGTH,
    FINISH_STOP,
    SearchHit,
    SearchResult,
    WikiEntry,
)

ENV_LLM_KEY = "DF_LLM_API_KEY"
ENV_SEARCH_KEY = "DF_SEARCH_API_KEY"
ENV_FETCH_KEY = "DF_FETCH_API_KEY"

_USER_AGENT = "deepforge/0.1"


def _post_json(url: str, payload: dict, headers: dict[str, str], timeout: float) -> dict:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(url, data=body, method="POST")
    request.add_header("Content-Type", "application/json")
    request.add_header("User-Agent", _USER_AGENT)
    for key, value in headers.items():
        request.add_header(key, value)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", errors="replace")[:500]
        if exc.code == 400 and "context" in detail.lower():
            raise ContextOverflow(detail) from exc
        raise ProviderUnavailable(f"HTTP {exc.code} from {url}: {detail}") from exc
    except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
        raise ProviderUnavailable(f"request to {url} failed: {exc}") from exc


class LiveChatProvider:
    """OpenAI-compatible chat completions endpoint."""

    def __init__(self, endpoint: str, model: str, timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout

    def chat(self, request: ChatRequest) -> ChatResponse:
        api_key = os.environ.get(ENV_LLM_KEY, "")
        if not api_key:
            raise ProviderUnavailable(f"{ENV_LLM_KEY} is not set")
        payload = {
            "model": self.model,
            "messages": [m.to_dict() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        data = _post_json(
            f"{self.endpoint}/chat/completions",
            payload,
            {"Authorization": f"Bearer {api_key}"},
            self.timeout,
        )
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
            finish = FINISH_LENGTH if choice.get("finish_reason") == "length" else FINISH_STOP
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"unexpected completion payload: {exc}") from exc
        return ChatResponse(text=text or "", finish=finish)


class LiveSearchProvider:
    """Serper-style JSON search endpoint."""

    def __init__(self, endpoint: str, top_k: int = 10, timeout: float = 30.0):
        self.endpoint = endpoint
        self.top_k = top_k
        self.timeout = timeout

    def search_one(self, query: str) -> SearchResult:
        api_key = os.environ.get(ENV_SEARCH_KEY, "")
        if not api_key:
            raise ProviderUnavailable(f"{ENV_SEARCH_KEY} is not set")
        data = _post_json(self.endpoint, {"q": query, "num": self.top_k}, {"X-API-KEY": api_key}, self.timeout)
        hits = []
        for row in data.get("organic", []):
            link = row.get("link", "")
            parsed = urllib.parse.urlparse(link)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                continue  # the hit contract requires a syntactically valid URL
            hits.append(
                SearchHit(
                    title=row.get("title", ""),
                    link=link,
                    snippet=row.get("snippet", ""),
                    position=len(hits) + 1,
                )
            )
            if len(hits) == self.top_k:
                break
        return SearchResult(query=query, hits=hits)


class LiveFetchProvider:
    """Plain HTTP GET; rejects payloads that are not HTML or text."""

    def __init__(self, timeout: float = 30.0, max_bytes: int = 2_000_000):
        self.timeout = timeout
        self.max_bytes = max_bytes

    def fetch_text(self, url: str) -> str:
        request = urllib.request.Request(url, headers={"User-Agent": _USER_AGENT})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                content_type = resp.headers.get("Content-Type", "")
                if "html" not in content_type and "text" not in content_type:
                    raise NonHtmlContent(f"content-type {content_type!r} for {url}")
                return resp.read(self.max_bytes).decode("utf-8", errors="replace")
        except urllib.error.HTTPError as exc:
            raise FetchFailure(exc.code, url) from exc
        except (urllib.error.URLError, TimeoutError) as exc:
            raise ProviderUnavailable(f"fetch of {url} failed: {exc}") from exc


class LiveWikiProvider:
    """Wikipedia REST summary lookups."""

    def __init__(self, endpoint: str = "https://en.wikipedia.org/api/rest_v1/page/summary", timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def lookup_one(self, name: str) -> WikiEntry:
        url = f"{self.endpoint}/{urllib.parse.quote(name)}"
        request = urllib.request.Request(url, headers={"User-Agent": _USER_AGENT})
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                return WikiEntry(name=name, found=False)
            raise ProviderUnavailable(f"wiki HTTP {exc.code} for {name!r}") from exc
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise ProviderUnavailable(f"wiki lookup for {name!r} failed: {exc}") from exc
        return WikiEntry(name=name, title=data.get("title", name), text=data.get("extract", ""))
