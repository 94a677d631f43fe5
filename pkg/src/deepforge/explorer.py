"""Entity-graph exploration driven by a function-calling agent conversation.

Each seed entity gets its own sequential conversation; the agent may call
search_google, crawl_url_content, or search_wiki (one call per turn) and
must finish with a result block holding the entity's facts and relations.
Frontier targets are expanded level by level up to the sampled depth.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from importlib import resources

from . import prompts
from .errors import (
    InvalidDistribution,
    MalformedResult,
    MissingKey,
    NoResultBlock,
    TranscriptError,
    WrongType,
)
from .providers.base import ChatMessage, ChatRequest, ProviderSuite
from .records import SEG_ANSWER, SEG_TOOL_CALL, Entity, EntityGraph, EntityRecord
from .transcript import FUNCTION_CALL_PROFILE, parse_assistant_message

log = logging.getLogger(__name__)

EXPLORER_TOOLS = ("search_google", "crawl_url_content", "search_wiki")


def explorer_tool_schemas() -> dict:
    schemas = {}
    files = {
        "search_google": "explorer_search_google.json",
        "crawl_url_content": "explorer_crawl_url_content.json",
        "search_wiki": "explorer_search_wiki.json",
    }
    for name, filename in files.items():
        text = resources.files("deepforge.data.tool_schemas").joinpath(filename).read_text(encoding="utf-8")
        schemas[name] = json.loads(text)
    return schemas


@dataclass(frozen=True)
class DepthDistribution:
    weights: dict[int, float]

    def __post_init__(self) -> None:
        import math

        if not self.weights:
            raise InvalidDistribution("no depths given")
        total = 0.0
        for depth, weight in self.weights.items():
            if depth < 0:
                raise InvalidDistribution(f"negative depth {depth}")
            if weight < 0 or not math.isfinite(weight):
                raise InvalidDistribution(f"invalid weight {weight!r} for depth {depth}")
            total += weight
        if total <= 0:
            raise InvalidDistribution("all weights are zero")


def parse_depth_dist(spec: str) -> DepthDistribution:
    """Parse '2:0.3,3:0.5,4:0.2' into a DepthDistribution."""
    weights: dict[int, float] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        match = re.fullmatch(r"(\d+)\s*:\s*([0-9.eE+\-]+)", part)
        if not match:
            raise InvalidDistribution(f"cannot parse depth spec fragment {part!r}")
        weights[int(match.group(1))] = float(match.group(2))
    return DepthDistribution(weights=weights)


def sample_depth(dist: DepthDistribution, rng: random.Random) -> int:
    total = sum(dist.weights.values())
    mark = rng.random() * total
    acc = 0.0
    depths = sorted(dist.weights)
    for depth in depths:
        acc += dist.weights[depth]
        if mark < acc:
            return depth
    return depths[-1]


def parse_result_block(text: str, entity: Entity) -> EntityRecord:
    match = re.search(r"<result>(.*?)</result>", text, flags=re.DOTALL)
    if not match:
        raise NoResultBlock("no <result> block in explorer output")
    try:
        payload = json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise MalformedResult(f"result block is not valid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise MalformedResult("result block must be a JSON object")
    for key in ("entity_self", "entity_relations"):
        if key not in payload:
            raise MissingKey(key)
    facts = payload["entity_self"]
    relations = payload["entity_relations"]
    if not isinstance(facts, list) or not all(isinstance(f, str) for f in facts):
        raise WrongType("entity_self", "an array of strings")
    if not isinstance(relations, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in relations.items()
    ):
        raise WrongType("entity_relations", "an object of string to string")
    facts = [f for f in facts if f.strip()]
    relations = {k: v for k, v in relations.items() if k.strip() and k != entity.name}
    record = EntityRecord(entity=entity, entity_self=facts, entity_relations=relations)
    record.validate()
    return record


def select_expansion_frontier(record: EntityRecord, k: int, high_freq: frozenset[str] = frozenset()) -> list[str]:
    """Prefer obscure relation targets; common ones only fill leftover slots."""
    if k <= 0:
        return []
    from .records import normalize_name

    targets = sorted(record.entity_relations, key=lambda n: (normalize_name(n) in high_freq, len(n), n))
    return targets[:k]


@dataclass
class ExploreBudget:
    max_agent_turns: int = 8
    max_calls: int = 64

    def __post_init__(self) -> None:
        if self.max_agent_turns <= 0 or self.max_calls <= 0:
            raise ValueError("budgets must be positive")


class _CallMeter:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self) -> bool:
        if self.used >= self.limit:
            return False
        self.used += 1
        return True


def _dispatch_explorer_tool(suite: ProviderSuite, name: str, arguments: dict) -> str:
    if name == "search_google":
        results = suite.search.search(str(arguments.get("query", "")))
        return json.dumps([r.to_dict() for r in results], ensure_ascii=False)
    if name == "crawl_url_content":
        return suite.fetch.fetch_and_clean(str(arguments.get("url", "")))
    if name == "search_wiki":
        entries = suite.wiki.lookup([str(e) for e in arguments.get("entity_list", [])])
        return json.dumps([e.to_dict() for e in entries], ensure_ascii=False)
    return f"error: unknown tool {name!r}; available tools are {', '.join(EXPLORER_TOOLS)}"


def _explore_one(suite: ProviderSuite, entity: Entity, budget: ExploreBudget, meter: _CallMeter) -> EntityRecord:
    prompt = prompts.render_explorer_prompt(entity.name, entity.description or "", explorer_tool_schemas())
    messages = [ChatMessage(role="user", content=prompt)]
    repaired = False
    for _ in range(budget.max_agent_turns):
        response = suite.chat.chat(ChatRequest(messages=messages))
        try:
            parsed = parse_assistant_message(response.text, FUNCTION_CALL_PROFILE)
            terminal = next((s for s in parsed.segments if s.kind in (SEG_TOOL_CALL, SEG_ANSWER)), None)
            if terminal is None:
                raise MalformedResult("turn contains neither a function call nor a result")
            if terminal.kind == SEG_ANSWER:
                return parse_result_block(f"<result>{terminal.text}</result>", entity)
        except (TranscriptError, MalformedResult) as exc:
            if repaired:
                raise MalformedResult(f"explorer turn unusable after repair: {exc}") from exc
            repaired = True
            messages.append(ChatMessage(role="assistant", content=response.text))
            messages.append(
                ChatMessage(
                    role="user",
                    content=f"Your last message could not be used ({exc}). "
                    "Send exactly one <function_call> or one final <result> block.",
                )
            )
            continue
        call = terminal.tool_call
        if not meter.spend():
            raise _BudgetStop()
        observation = _dispatch_explorer_tool(suite, call["name"], call["arguments"])
        messages.append(ChatMessage(role="assistant", content=response.text))
        messages.append(ChatMessage(role="user", content=f"<tool_response>\n{observation}\n</tool_response>"))
    raise MalformedResult(f"explorer for {entity.name!r} produced no result within the turn budget")


class _BudgetStop(Exception):
    pass


def explore_all(
    suite: ProviderSuite,
    entities: list[Entity],
    dist: DepthDistribution,
    budget: ExploreBudget,
    out_path,
    run_seed: int,
    frontier_k: int = 3,
    high_freq: frozenset[str] = frozenset(),
    workers: int = 1,
) -> int:
    """Explore every seed entity into a graph; resumable, outage-transparent."""
    from concurrent.futures import ThreadPoolExecutor

    from .errors import DeepForgeError, ProviderUnavailable
    from .records import derive_seed
    from .resume import StageWriter

    writer = StageWriter(out_path, key_fn=lambda row: row["root"])
    done = writer.done_keys()
    todo = [e for e in entities if e.name not in done]

    def explore_one(entity: Entity) -> None:
        rng = random.Random(derive_seed(run_seed, "depth", entity.name))
        depth = sample_depth(dist, rng)
        try:
            graph = explore_entity(suite, entity, depth, budget, frontier_k=frontier_k, high_freq=high_freq)
        except ProviderUnavailable:
            raise  # an outage is not a per-item fault
        except DeepForgeError as exc:
            log.warning("exploration of %r failed, skipping: %s", entity.name, exc)
            return
        writer.append(graph.to_dict())

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        list(pool.map(explore_one, todo))
    return writer.finalize()


def explore_entity(
    suite: ProviderSuite,
    seed: Entity,
    depth: int,
    budget: ExploreBudget,
    frontier_k: int = 3,
    high_freq: frozenset[str] = frozenset(),
) -> EntityGraph:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    meter = _CallMeter(budget.max_calls)
    records: dict[str, EntityRecord] = {}
    truncated = False
    level: list[Entity] = [seed]
    try:
        for current_depth in range(depth + 1):
            next_level: list[Entity] = []
            for entity in level:
                if entity.name in records:
                    continue
                try:
                    record = _explore_one(suite, entity, budget, meter)
                except MalformedResult:
                    if entity.name == seed.name:
                        raise
                    log.warning("skipping frontier entity %r: exploration failed", entity.name)
                    continue
                records[entity.name] = record
                if current_depth < depth:
                    for target in select_expansion_frontier(record, frontier_k, high_freq):
                        if target not in records:
                            next_level.append(Entity(name=target, description="a related organisation"))
            level = next_level
    except _BudgetStop:
        truncated = True
    if seed.name not in records:
        raise MalformedResult(f"no record produced for seed {seed.name!r}")
    graph = EntityGraph(root=seed.name, records=records, depth=depth, truncated=truncated)
    graph.validate()
    return graph
