"""Flat key-value configuration for the pipeline and its stages.

File format: one ``key = value`` per line, ``#`` comments allowed. Keys are
dotted per stage (stage1.batch_size, collect.rollouts, ...). Unknown keys
are rejected so typos fail fast, before any work starts.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError


@dataclass
class PipelineConfig:
    # run
    seed: int = 0
    workers: int = 4
    mock: bool = False
    out_dir: Optional[str] = None

    # stage 1: entity expansion
    stage1_batch_size: int = 16
    stage1_workers: int = 0  # 0 means inherit run workers
    stage1_target_pool_size: int = 100
    stage1_top_k: int = 5
    stage1_stoplist_path: Optional[str] = None

    # stage 2: graph exploration
    stage2_depth_dist: str = "2:0.3,3:0.5,4:0.2"
    stage2_frontier_k: int = 3
    stage2_max_agent_turns: int = 8
    stage2_max_calls: int = 64

    # qa generation
    qa_skip_prune: bool = False
    qa_skip_validate: bool = False

    # trajectory collection
    collect_rollouts: int = 4
    collect_max_turns: int = 50
    collect_max_context_tokens: int = 131072
    collect_temperature: float = 0.6

    # curation
    filter_min_tokens: int = 8192
    filter_max_tokens: int = 131072

    # analytics / pricing
    search_top_k: int = 10
    price_search_usd_per_1k: float = 1.0
    cost_calls_per_task: float = 15.0

    # live providers
    llm_endpoint: str = ""
    llm_model: str = ""
    summarizer_model: str = ""
    search_endpoint: str = ""
    search_rate_limit_per_s: float = 10.0
    sandbox_interpreter: str = sys.executable

    def validate(self) -> None:
        checks = [
            (self.workers >= 1, "workers must be >= 1"),
            (self.stage1_batch_size >= 0, "stage1.batch_size must be >= 0"),
            (self.stage1_target_pool_size >= 1, "stage1.target_pool_size must be >= 1"),
            (self.stage1_top_k >= 1, "stage1.top_k must be >= 1"),
            (self.stage2_frontier_k >= 0, "stage2.frontier_k must be >= 0"),
            (self.stage2_max_agent_turns >= 1, "stage2.max_agent_turns must be >= 1"),
            (self.stage2_max_calls >= 1, "stage2.max_calls must be >= 1"),
            (self.collect_rollouts >= 1, "collect.rollouts must be >= 1"),
            (self.collect_max_turns >= 1, "collect.max_turns must be >= 1"),
            (self.collect_max_context_tokens >= 1, "collect.max_context_tokens must be >= 1"),
            (self.collect_temperature >= 0, "collect.temperature must be >= 0"),
            (self.filter_min_tokens >= 0, "filter.min_tokens must be >= 0"),
            (self.filter_max_tokens >= self.filter_min_tokens, "filter.max_tokens must be >= filter.min_tokens"),
            (self.search_top_k >= 1, "search.top_k must be >= 1"),
            (self.search_rate_limit_per_s >= 0, "search.rate_limit_per_s must be >= 0"),
            (self.price_search_usd_per_1k >= 0, "price.search_usd_per_1k must be >= 0"),
            (self.cost_calls_per_task >= 0, "cost.calls_per_task must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        if not self.mock and not (self.llm_endpoint and self.llm_model and self.search_endpoint):
            raise ConfigError(
                "live mode requires llm.endpoint, llm.model, and search.endpoint "
                "(or pass --mock for offline providers)"
            )

    def stage1_effective_workers(self) -> int:
        return self.stage1_workers or self.workers


_KEY_TO_FIELD = {
    "run.seed": "seed",
    "run.workers": "workers",
    "run.mock": "mock",
    "run.out_dir": "out_dir",
    "stage1.batch_size": "stage1_batch_size",
    "stage1.workers": "stage1_workers",
    "stage1.target_pool_size": "stage1_target_pool_size",
    "stage1.top_k": "stage1_top_k",
    "stage1.stoplist_path": "stage1_stoplist_path",
    "stage2.depth_dist": "stage2_depth_dist",
    "stage2.frontier_k": "stage2_frontier_k",
    "stage2.max_agent_turns": "stage2_max_agent_turns",
    "stage2.max_calls": "stage2_max_calls",
    "qa.skip_prune": "qa_skip_prune",
    "qa.skip_validate": "qa_skip_validate",
    "collect.rollouts": "collect_rollouts",
    "collect.max_turns": "collect_max_turns",
    "collect.max_context_tokens": "collect_max_context_tokens",
    "collect.temperature": "collect_temperature",
    "filter.min_tokens": "filter_min_tokens",
    "filter.max_tokens": "filter_max_tokens",
    "search.top_k": "search_top_k",
    "price.search_usd_per_1k": "price_search_usd_per_1k",
    "cost.calls_per_task": "cost_calls_per_task",
    "llm.endpoint": "llm_endpoint",
    "llm.model": "llm_model",
    "llm.summarizer_model": "summarizer_model",
    "search.endpoint": "search_endpoint",
    "search.rate_limit_per_s": "search_rate_limit_per_s",
    "sandbox.interpreter": "sandbox_interpreter",
}

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def parse_config_text(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    config = base or PipelineConfig()
    field_types = {f.name: f.type for f in fields(PipelineConfig)}
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_number}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {line_number}: unknown config key {key!r}")
        attr = _KEY_TO_FIELD[key]
        current = getattr(config, attr)
        declared = field_types[attr]
        if isinstance(declared, str):
            target = {"int": int, "float": float, "bool": bool, "str": str}.get(
                declared.replace("Optional[", "").replace("]", ""), str
            )
        else:
            target = type(current) if current is not None else str
        try:
            setattr(config, attr, _coerce(raw, target))
        except ValueError as exc:
            raise ConfigError(f"line {line_number}: bad value for {key}: {exc}") from exc
    return config


def load_config(path: Optional[str | Path], base: Optional[PipelineConfig] = None) -> PipelineConfig:
    if path is None:
        return base or PipelineConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)
