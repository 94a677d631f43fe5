from .base import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    CodeResult,
    CostLedger,
    ExecLimits,
    FetchClient,
    InstrumentedChat,
    ProviderSuite,
    RateLimiter,
    RetryPolicy,
    SearchClient,
    SearchHit,
    SearchResult,
    WikiClient,
    WikiEntry,
    call_with_retries,
)
from .mock import (
    FlakyChatProvider,
    MockChatProvider,
    MockFetchProvider,
    MockSandbox,
    MockSearchProvider,
    MockWikiProvider,
    ScriptedChatProvider,
    load_fixture_table,
    request_hash,
)
from .sandbox import SubprocessSandbox
from .world import MockWorld

__all__ = [
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "CodeResult",
    "CostLedger",
    "ExecLimits",
    "FetchClient",
    "FlakyChatProvider",
    "InstrumentedChat",
    "MockChatProvider",
    "MockFetchProvider",
    "MockSandbox",
    "MockSearchProvider",
    "MockWikiProvider",
    "MockWorld",
    "ProviderSuite",
    "RateLimiter",
    "RetryPolicy",
    "ScriptedChatProvider",
    "SearchClient",
    "SearchHit",
    "SearchResult",
    "SubprocessSandbox",
    "WikiClient",
    "WikiEntry",
    "call_with_retries",
    "load_fixture_table",
    "request_hash",
]
