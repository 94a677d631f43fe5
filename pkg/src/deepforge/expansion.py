"""Seed-pool growth: noun batches -> web search -> page text -> entity extraction.

The loop keeps requesting noun batches, fans each noun out to W workers, and
accumulates extracted entities until the deduplicated pool reaches the
target size or the noun supply saturates. Progress is persisted per batch so
an interrupted run resumes to an identical final pool.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import prompts
from .errors import DegenerateBatch, MalformedExtraction, ProviderError
from .providers.base import ChatMessage, ChatRequest, ProviderSuite
from .records import Entity, normalize_name
from .storage import atomic_write_text, dump_line

log = logging.getLogger(__name__)

_LINE_PREFIX_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s*)?")
_NUMERIC_RE = re.compile(r"^[\d\s]+$")


def load_wordlist(name: str) -> frozenset[str]:
    text = resources.files("deepforge.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(normalize_name(line) for line in text.splitlines() if line.strip())


def default_stoplist() -> frozenset[str]:
    return load_wordlist("stoplist.txt")


def high_frequency_names() -> frozenset[str]:
    return load_wordlist("high_frequency.txt")


@dataclass
class ExpansionStats:
    nouns_generated: int = 0
    urls_visited: int = 0
    entities_raw: int = 0
    entities_kept: int = 0

    def to_dict(self) -> dict:
        return {
            "nouns_generated": self.nouns_generated,
            "urls_visited": self.urls_visited,
            "entities_raw": self.entities_raw,
            "entities_kept": self.entities_kept,
        }


@dataclass
class SeedEntitySet:
    entities: list[Entity] = field(default_factory=list)
    noun_pool: list[str] = field(default_factory=list)
    stats: ExpansionStats = field(default_factory=ExpansionStats)


def _clean_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = _LINE_PREFIX_RE.sub("", raw).strip()
        if line:
            lines.append(line)
    return lines


def generate_noun_batch(chat, batch_size: int, exclusion: set[str]) -> list[str]:
    """Ask for up to ``batch_size`` fresh nouns; raises when the pool is dry."""
    if batch_size <= 0:
        return []
    normalized_exclusion = {normalize_name(n) for n in exclusion}
    prompt = prompts.render_noun_prompt(batch_size, sorted(exclusion))
    response = chat.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
    fresh: list[str] = []
    seen: set[str] = set()
    for line in _clean_lines(response.text):
        key = normalize_name(line)
        if key in normalized_exclusion or key in seen:
            continue
        seen.add(key)
        fresh.append(line)
        if len(fresh) == batch_size:
            break
    if not fresh:
        raise DegenerateBatch("noun batch produced nothing new")
    return fresh


def collect_seed_urls(search, noun: str, top_k: int) -> list[str]:
    if not noun.strip():
        raise ValueError("noun must be non-empty")
    result = search.search([noun])[0]
    urls: list[str] = []
    for hit in result.hits:
        if hit.link not in urls:
            urls.append(hit.link)
        if len(urls) == top_k:
            break
    return urls


def extract_entities(chat, page_text: str, origin: str, source_url: Optional[str] = None) -> list[Entity]:
    """Parse 'name | description' lines out of the extraction response."""
    if not page_text.strip():
        raise ValueError("page text must be non-empty")
    prompt = prompts.render_extraction_prompt(page_text)
    response = chat.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
    entities: list[Entity] = []
    for line in _clean_lines(response.text):
        if "|" in line:
            name, _, description = line.partition("|")
            name = name.strip()
            description = description.strip() or None
        elif len(line.split()) <= 12:
            name, description = line, None
        else:
            raise MalformedExtraction(f"unparseable extraction line: {line[:80]!r}")
        if name:
            entities.append(Entity(name=name, description=description, source_url=source_url, origin_noun=origin))
    return entities


def dedup_and_filter(pool: list[Entity], stoplist: frozenset[str], high_freq: frozenset[str] = frozenset()) -> SeedEntitySet:
    """First occurrence wins; stoplisted, short, numeric, and common names drop."""
    kept: list[Entity] = []
    seen: set[str] = set()
    for entity in pool:
        key = normalize_name(entity.name)
        if key in seen:
            continue
        seen.add(key)
        if key in stoplist or len(key) < 2 or _NUMERIC_RE.match(key) or key in high_freq:
            continue
        kept.append(entity)
    stats = ExpansionStats(entities_raw=len(pool), entities_kept=len(kept))
    return SeedEntitySet(entities=kept, stats=stats)


@dataclass
class _BatchState:
    index: int
    nouns: list[str]
    entities: list[dict]
    urls_visited: int
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "nouns": self.nouns,
            "entities": self.entities,
            "urls_visited": self.urls_visited,
            "degenerate": self.degenerate,
        }


def _process_noun(suite: ProviderSuite, noun: str, top_k: int) -> tuple[list[dict], int]:
    rows: list[dict] = []
    urls = collect_seed_urls(suite.search, noun, top_k)
    for url in urls:
        try:
            text = suite.fetch.fetch_and_clean(url)
        except ProviderError as exc:
            log.warning("fetch of %s failed, skipping: %s", url, exc)
            continue
        if not text.strip():
            continue
        try:
            found = extract_entities(suite.chat, text, origin=noun, source_url=url)
        except MalformedExtraction as exc:
            log.warning("extraction failed for %s, skipping page: %s", url, exc)
            continue
        rows.extend(e.to_dict() for e in found)
    return rows, len(urls)


def run_stage1(
    suite: ProviderSuite,
    batch_size: int,
    workers: int,
    target_pool_size: int,
    top_k: int,
    state_path: str | Path,
    stoplist: Optional[frozenset[str]] = None,
    high_freq: Optional[frozenset[str]] = None,
    max_batches: int = 50,
) -> SeedEntitySet:
    if workers < 1 or target_pool_size < 1:
        raise ValueError("workers and target_pool_size must be >= 1")
    stoplist = default_stoplist() if stoplist is None else stoplist
    high_freq = high_frequency_names() if high_freq is None else high_freq
    state_path = Path(state_path)

    batches: list[_BatchState] = []
    if state_path.exists():
        for line in state_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                batches.append(
                    _BatchState(
                        index=row["index"],
                        nouns=row["nouns"],
                        entities=row["entities"],
                        urls_visited=row["urls_visited"],
                        degenerate=row["degenerate"],
                    )
                )
        if batches:
            log.info("resuming stage 1 from %d persisted batches", len(batches))

    def pool_of(rows: list[_BatchState]) -> SeedEntitySet:
        raw = [Entity.from_dict(d) for b in rows for d in b.entities]
        return dedup_and_filter(raw, stoplist, high_freq)

    while len(batches) < max_batches:
        current = pool_of(batches)
        if len(current.entities) >= target_pool_size:
            break
        if len(batches) >= 2 and batches[-1].degenerate and batches[-2].degenerate:
            log.warning("two consecutive degenerate batches; stopping with partial pool")
            break
        exclusion = {n for b in batches for n in b.nouns}
        index = len(batches)
        try:
            nouns = generate_noun_batch(suite.chat, batch_size, exclusion)
            degenerate = False
        except DegenerateBatch:
            nouns = []
            degenerate = True
        entities: list[dict] = []
        urls_visited = 0
        if nouns:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda n: _process_noun(suite, n, top_k), nouns))
            # Merge in noun order so the outcome is schedule-independent.
            for rows, visited in results:
                entities.extend(rows)
                urls_visited += visited
        batch = _BatchState(index=index, nouns=nouns, entities=entities, urls_visited=urls_visited, degenerate=degenerate)
        batches.append(batch)
        existing = state_path.read_text(encoding="utf-8") if state_path.exists() else ""
        atomic_write_text(state_path, existing + dump_line(batch.to_dict()))

    final = pool_of(batches)
    final.noun_pool = [n for b in batches for n in b.nouns]
    final.stats.nouns_generated = len(final.noun_pool)
    final.stats.urls_visited = sum(b.urls_visited for b in batches)
    return final
