"""ReAct runner: drive a policy against a question with the four-tool registry.

One rollout is one strictly sequential conversation. The policy's text is
parsed into tagged segments; tool calls are schema-checked, dispatched, and
fed back inside tool_response tags. Every outcome is encoded in the
trajectory status (complete, truncated, failed) rather than raised.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

from . import prompts, schema
from .errors import ProviderError, TranscriptError
from .providers.base import ChatMessage, ChatRequest, ExecLimits, ProviderSuite
from .records import (
    ROLE_ASSISTANT,
    ROLE_SYSTEM,
    ROLE_TOOL,
    ROLE_USER,
    SEG_PLAIN,
    SEG_TOOL_RESPONSE,
    STATUS_COMPLETE,
    STATUS_FAILED,
    STATUS_TRUNCATED,
    CollectedTrajectory,
    Message,
    QAPair,
    Segment,
    Trajectory,
)
from .tokenizers import TokenizerHandle
from .transcript import message_problems, parse_assistant_message, render_segments, trajectory_id

log = logging.getLogger(__name__)

CANONICAL_TOOLS = ("search", "visit_urls", "search_wiki", "execute_code")
# Older transcripts name the code tool differently; accept it on dispatch.
TOOL_ALIASES = {"code_execution": "execute_code"}


@dataclass
class ToolSpec:
    name: str
    schema: dict
    dispatcher: Callable[[dict], str]


class ToolRegistry:
    def __init__(self, tools: Optional[list[ToolSpec]] = None):
        self._tools: dict[str, ToolSpec] = {}
        for tool in tools or []:
            self.register(tool)

    def register(self, tool: ToolSpec) -> None:
        if tool.name in self._tools:
            raise ValueError(f"duplicate tool name {tool.name!r}")
        self._tools[tool.name] = tool

    def names(self) -> list[str]:
        return list(self._tools)

    def resolve(self, name: str) -> Optional[ToolSpec]:
        return self._tools.get(TOOL_ALIASES.get(name, name))

    def schemas(self) -> dict:
        return {name: spec.schema for name, spec in self._tools.items()}


def load_tool_schema(name: str) -> dict:
    text = resources.files("deepforge.data.tool_schemas").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def tool_visit_urls(suite: ProviderSuite, urls: list[str], query: str) -> list[dict]:
    """Per-URL summaries against the query; one failure never sinks the batch."""
    out: list[dict] = []
    summarizer = suite.summarizer_chat()
    for url in urls:
        try:
            text = suite.fetch.fetch_and_clean(url)
            prompt = prompts.render_summary_prompt(query, text)
            reply = summarizer.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
            out.append({"url": url, "report": reply.text})
        except ProviderError as exc:
            out.append({"url": url, "error": str(exc)})
    return out


def default_registry(suite: ProviderSuite, exec_limits: Optional[ExecLimits] = None) -> ToolRegistry:
    exec_limits = exec_limits or ExecLimits()

    def dispatch_search(arguments: dict) -> str:
        results = suite.search.search(arguments["query"])
        return json.dumps({"tool": "search", "result": [r.to_dict() for r in results]}, ensure_ascii=False)

    def dispatch_visit(arguments: dict) -> str:
        reports = tool_visit_urls(suite, arguments["urls"], arguments["query"])
        result = reports[0] if len(reports) == 1 else reports
        return json.dumps({"tool": "visit_urls", "result": result}, ensure_ascii=False)

    def dispatch_wiki(arguments: dict) -> str:
        entries = suite.wiki.lookup(arguments["entity_list"])
        return json.dumps({"tool": "search_wiki", "result": [e.to_dict() for e in entries]}, ensure_ascii=False)

    def dispatch_code(arguments: dict) -> str:
        if suite.sandbox is None:
            return json.dumps({"tool": "execute_code", "error": "no sandbox configured"})
        result = suite.sandbox.run(arguments["code"], exec_limits)
        payload = result.stdout if result.exit == "ok" else f"{result.stdout}\n{result.stderr}".strip()
        return json.dumps({"tool": "execute_code", "result": payload, "exit": result.exit}, ensure_ascii=False)

    return ToolRegistry(
        [
            ToolSpec("search", load_tool_schema("search"), dispatch_search),
            ToolSpec("visit_urls", load_tool_schema("visit_urls"), dispatch_visit),
            ToolSpec("search_wiki", load_tool_schema("search_wiki"), dispatch_wiki),
            ToolSpec("execute_code", load_tool_schema("execute_code"), dispatch_code),
        ]
    )


@dataclass
class RunLimits:
    max_turns: int = 50
    max_context_tokens: int = 131072
    per_tool_timeout_seconds: float = 30.0

    def __post_init__(self) -> None:
        if self.max_turns <= 0 or self.max_context_tokens <= 0 or self.per_tool_timeout_seconds <= 0:
            raise ValueError("run limits must be positive")


def _provider_context(messages: list[Message]) -> list[ChatMessage]:
    """Datamodel messages -> provider wire messages; tool turns ride user-side."""
    wire: list[ChatMessage] = []
    for message in messages:
        text = render_segments(message.segments)
        if message.role == ROLE_TOOL:
            wire.append(ChatMessage(role=ROLE_USER, content=text))
        else:
            wire.append(ChatMessage(role=message.role, content=text))
    return wire


def _context_tokens(messages: list[Message], extra: list[ChatMessage], tokenizer: TokenizerHandle) -> int:
    rendered = "\n".join(m.content for m in _provider_context(messages) + extra)
    return tokenizer.count(rendered)


def run_agent(
    query: str,
    policy,
    registry: ToolRegistry,
    limits: RunLimits,
    tokenizer: Optional[TokenizerHandle] = None,
    temperature: float = 0.0,
) -> Trajectory:
    tokenizer = tokenizer or TokenizerHandle()
    system = Message(role=ROLE_SYSTEM, segments=[Segment(kind=SEG_PLAIN, text=prompts.render_agent_system_prompt(registry.schemas()))])
    task = Message(role=ROLE_USER, segments=[Segment(kind=SEG_PLAIN, text=query)])
    messages: list[Message] = [system, task]
    repair: list[ChatMessage] = []
    status = STATUS_TRUNCATED
    final_answer: Optional[str] = None

    for _ in range(limits.max_turns):
        if _context_tokens(messages, repair, tokenizer) > limits.max_context_tokens:
            status = STATUS_TRUNCATED
            break
        request = ChatRequest(messages=_provider_context(messages) + repair, temperature=temperature)
        try:
            response = policy.chat(request)
        except ProviderError as exc:
            log.warning("policy call failed: %s", exc)
            status = STATUS_FAILED
            break

        parsed: Optional[Message] = None
        problem: Optional[str] = None
        try:
            candidate = parse_assistant_message(response.text)
            issues = message_problems(candidate)
            if issues:
                problem = "; ".join(issues)
            else:
                parsed = candidate
        except TranscriptError as exc:
            problem = str(exc)

        if parsed is None:
            if repair:
                status = STATUS_FAILED
                break
            # One repair re-prompt carrying the parse error; the malformed
            # turn never enters the recorded trajectory.
            repair = [
                ChatMessage(role=ROLE_ASSISTANT, content=response.text),
                ChatMessage(
                    role=ROLE_USER,
                    content=f"Your reply could not be parsed ({problem}). Reply again with one "
                    "<think> block followed by exactly one <tool_call> or <answer> block.",
                ),
            ]
            continue
        repair = []

        answer = parsed.answer_segment()
        if answer is not None:
            messages.append(parsed)
            final_answer = answer.text
            status = STATUS_COMPLETE
            break

        call = parsed.tool_calls()[0].tool_call
        messages.append(parsed)
        observation = _dispatch(registry, call)
        if "</tool_response>" in observation:
            # A page echoing our delimiter would corrupt the transcript.
            log.warning("observation contained a reserved closing tag; rewriting it")
            observation = observation.replace("</tool_response>", "</tool-response>")
        messages.append(
            Message(role=ROLE_TOOL, segments=[Segment(kind=SEG_TOOL_RESPONSE, text=observation)])
        )

    tool_call_count = sum(len(m.tool_calls()) for m in messages)
    return Trajectory(
        id=trajectory_id(query, messages, status),
        query=query,
        messages=messages,
        final_answer=final_answer,
        tool_call_count=tool_call_count,
        status=status,
    )


def _dispatch(registry: ToolRegistry, call: dict) -> str:
    spec = registry.resolve(call["name"])
    if spec is None:
        return f"error: unknown tool {call['name']!r}; available tools: {', '.join(registry.names())}"
    problems = schema.validate(call["arguments"], spec.schema.get("parameters", {}))
    if problems:
        # Schema violations are fed back as observations so the policy can recover.
        return "error: invalid arguments for " + spec.name + ": " + "; ".join(problems)
    try:
        return spec.dispatcher(call["arguments"])
    except ProviderError as exc:
        return f"error: tool {spec.name} failed: {exc}"


PolicyFactory = Callable[[str, int], object]


def rollout_key(row: dict) -> str:
    return f"{row['task_id']}:{int(row['rollout_index']):06d}"


def sample_trajectories(
    qa_pairs: list[QAPair],
    rollouts: int,
    policy_factory: PolicyFactory,
    registry: ToolRegistry,
    limits: RunLimits,
    out_path,
    workers: int = 1,
    tokenizer: Optional[TokenizerHandle] = None,
) -> list[CollectedTrajectory]:
    """k rollouts per task, persisted as they finish, resumable on (task_id, rollout_index)."""
    from .resume import StageWriter

    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    writer = StageWriter(out_path, rollout_key)
    done = writer.done_keys()
    if done:
        log.info("resuming collection with %d existing rollouts", len(done))

    jobs = [
        (qa.task_id(), index, qa)
        for qa in qa_pairs
        for index in range(rollouts)
        if rollout_key({"task_id": qa.task_id(), "rollout_index": index}) not in done
    ]

    def run_one(job) -> None:
        task_id, index, qa = job
        policy = policy_factory(task_id, index)
        trajectory = run_agent(qa.question, policy, registry, limits, tokenizer)
        writer.append(CollectedTrajectory(task_id=task_id, rollout_index=index, trajectory=trajectory).to_dict())

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        list(pool.map(run_one, jobs))

    writer.finalize()
    return [CollectedTrajectory.from_dict(row) for row in writer.rows()]
