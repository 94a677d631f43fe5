"""Stage orchestration over a run directory with manifest-based resume.

Artifacts live in the run directory as line-delimited JSON; the manifest
records which stages completed. Re-running skips finished stages, and a run
interrupted at any point converges to the same final bytes as an
uninterrupted one.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional

from . import analytics, curation, expansion, explorer, qaforge
from .agent import RunLimits, default_registry, rollout_key, sample_trajectories
from .config import PipelineConfig
from .errors import DeepForgeError, ProviderUnavailable, StageFailure
from .explorer import ExploreBudget, parse_depth_dist
from .providers.base import ProviderSuite
from .providers.world import MockWorld
from .records import CollectedTrajectory, Entity, EntityGraph, QAPair, canonical_json, derive_seed
from .resume import write_sorted
from .storage import atomic_write_text, count_lines, read_records
from .tokenizers import TokenizerHandle

log = logging.getLogger(__name__)

STAGES = ("expand", "explore", "genqa", "collect", "filter", "dpo-pairs")

ARTIFACTS = {
    "expand": ("entities.jsonl",),
    "explore": ("graphs.jsonl",),
    "genqa": ("qa.jsonl",),
    "collect": ("trajectories.jsonl",),
    "filter": ("verdicts.jsonl", "kept.jsonl"),
    "dpo-pairs": ("scores.jsonl", "pairs.jsonl"),
}


class RunDirectory:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"

    def path(self, name: str) -> Path:
        return self.root / name

    def manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return {"completed": {}}

    def mark_complete(self, stage: str, counts: dict[str, int]) -> None:
        manifest = self.manifest()
        manifest["completed"][stage] = counts
        atomic_write_text(self.manifest_path, canonical_json(manifest) + "\n")

    def is_complete(self, stage: str) -> bool:
        return stage in self.manifest()["completed"]


def build_suite(config: PipelineConfig) -> ProviderSuite:
    if config.mock:
        return MockWorld(seed=config.seed).build_suite(
            unit_prices={"search": config.price_search_usd_per_1k}
        )
    from .providers.base import CostLedger, FetchClient, InstrumentedChat, RateLimiter, SearchClient, WikiClient
    from .providers.live import LiveChatProvider, LiveFetchProvider, LiveSearchProvider, LiveWikiProvider
    from .providers.sandbox import SubprocessSandbox

    ledger = CostLedger(unit_prices={"search": config.price_search_usd_per_1k})
    limiter = RateLimiter(config.search_rate_limit_per_s)
    summarizer = None
    if config.summarizer_model and config.summarizer_model != config.llm_model:
        summarizer = InstrumentedChat(
            LiveChatProvider(config.llm_endpoint, config.summarizer_model), ledger, name="summarizer"
        )
    return ProviderSuite(
        chat=InstrumentedChat(LiveChatProvider(config.llm_endpoint, config.llm_model), ledger, name="llm"),
        search=SearchClient(
            LiveSearchProvider(config.search_endpoint, top_k=config.search_top_k), ledger, limiter=limiter
        ),
        fetch=FetchClient(LiveFetchProvider(), ledger),
        wiki=WikiClient(LiveWikiProvider(), ledger),
        sandbox=SubprocessSandbox(config.sandbox_interpreter),
        ledger=ledger,
        summarizer=summarizer,
    )


def _policy_factory(config: PipelineConfig, suite: ProviderSuite):
    if config.mock:
        world = MockWorld(seed=config.seed)

        def factory(task_id: str, rollout_index: int):
            return world.policy_provider(derive_seed(config.seed, "rollout", task_id, rollout_index))

        return factory

    def live_factory(task_id: str, rollout_index: int):
        return suite.chat

    return live_factory


def stage_expand(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    stoplist = None
    if config.stage1_stoplist_path:
        text = Path(config.stage1_stoplist_path).read_text(encoding="utf-8")
        from .records import normalize_name

        stoplist = frozenset(normalize_name(line) for line in text.splitlines() if line.strip())
    seed_set = expansion.run_stage1(
        suite,
        batch_size=config.stage1_batch_size,
        workers=config.stage1_effective_workers(),
        target_pool_size=config.stage1_target_pool_size,
        top_k=config.stage1_top_k,
        state_path=run.path("expand.state.jsonl"),
        stoplist=stoplist,
    )
    return write_sorted(
        run.path("entities.jsonl"),
        [e.to_dict() for e in seed_set.entities],
        key_fn=lambda row: row["name"],
    )


def stage_explore(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    entities = read_records(run.path("entities.jsonl"), Entity.from_dict)
    return explorer.explore_all(
        suite,
        entities,
        dist=parse_depth_dist(config.stage2_depth_dist),
        budget=ExploreBudget(max_agent_turns=config.stage2_max_agent_turns, max_calls=config.stage2_max_calls),
        out_path=run.path("graphs.jsonl"),
        run_seed=config.seed,
        frontier_k=config.stage2_frontier_k,
        high_freq=expansion.high_frequency_names(),
        workers=config.workers,
    )


def stage_genqa(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    graphs = read_records(run.path("graphs.jsonl"), EntityGraph.from_dict)
    pairs = qaforge.run_stage2(
        suite,
        graphs,
        out_path=run.path("qa.jsonl"),
        skip_prune=config.qa_skip_prune,
        skip_validate=config.qa_skip_validate,
        workers=config.workers,
    )
    return len(pairs)


def stage_collect(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    from .providers.base import ExecLimits

    qa_pairs = read_records(run.path("qa.jsonl"), QAPair.from_dict)
    limits = RunLimits(
        max_turns=config.collect_max_turns,
        max_context_tokens=config.collect_max_context_tokens,
    )
    registry = default_registry(suite, ExecLimits(wall_seconds=limits.per_tool_timeout_seconds))
    rows = sample_trajectories(
        qa_pairs,
        rollouts=config.collect_rollouts,
        policy_factory=_policy_factory(config, suite),
        registry=registry,
        limits=limits,
        out_path=run.path("trajectories.jsonl"),
        workers=config.workers,
    )
    return len(rows)


def stage_filter(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    rows = read_records(run.path("trajectories.jsonl"), CollectedTrajectory.from_dict)
    qa_pairs = read_records(run.path("qa.jsonl"), QAPair.from_dict)
    qa_by_task = {qa.task_id(): qa for qa in qa_pairs}
    filter_config = curation.FilterConfig(
        min_tokens=config.filter_min_tokens, max_tokens=config.filter_max_tokens
    )
    verdicts, kept = curation.run_filter_pipeline(
        rows, qa_by_task, suite.chat, suite.chat, TokenizerHandle(), filter_config
    )
    write_sorted(
        run.path("verdicts.jsonl"),
        [v.to_dict() for v in verdicts],
        key_fn=lambda row: row["trajectory_id"],
    )
    return write_sorted(run.path("kept.jsonl"), [k.to_dict() for k in kept], key_fn=rollout_key)


def stage_dpo_pairs(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite) -> int:
    kept = read_records(run.path("kept.jsonl"), CollectedTrajectory.from_dict)
    qa_pairs = read_records(run.path("qa.jsonl"), QAPair.from_dict)
    qa_by_task = {qa.task_id(): qa for qa in qa_pairs}
    by_task: dict[str, list[CollectedTrajectory]] = {}
    for row in kept:
        by_task.setdefault(row.task_id, []).append(row)

    all_cards = []
    all_pairs = []
    for task_id in sorted(by_task):
        qa = qa_by_task.get(task_id)
        if qa is None:
            continue
        try:
            cards = curation.score_trajectories(qa.question, by_task[task_id], suite.chat)
        except ProviderUnavailable:
            raise
        except DeepForgeError as exc:
            log.warning("scoring failed for task %s: %s", task_id, exc)
            continue
        all_cards.extend(cards)
        all_pairs.extend(curation.build_preference_pairs(cards, task_id=task_id))

    write_sorted(
        run.path("scores.jsonl"),
        [c.to_dict() for c in all_cards],
        key_fn=lambda row: (row["task_id"], row["trajectory_id"]),
    )
    return write_sorted(
        run.path("pairs.jsonl"),
        [p.to_dict() for p in all_pairs],
        key_fn=lambda row: (row["task_id"], row["chosen_id"], row["rejected_id"]),
    )


_STAGE_FUNCTIONS = {
    "expand": stage_expand,
    "explore": stage_explore,
    "genqa": stage_genqa,
    "collect": stage_collect,
    "filter": stage_filter,
    "dpo-pairs": stage_dpo_pairs,
}


def run_pipeline(
    config: PipelineConfig,
    out_dir: str | Path,
    suite: Optional[ProviderSuite] = None,
    until: Optional[str] = None,
) -> dict:
    """Execute the stages in order, skipping completed ones; returns the report."""
    run = RunDirectory(out_dir)
    suite = suite or build_suite(config)
    wanted = STAGES if until is None else STAGES[: STAGES.index(until) + 1]
    executed = []
    for stage in wanted:
        if run.is_complete(stage):
            log.info("stage %s already complete; skipping", stage)
            continue
        log.info("running stage %s", stage)
        try:
            _STAGE_FUNCTIONS[stage](run, config, suite)
        except DeepForgeError:
            raise
        except Exception as exc:
            raise StageFailure(stage, str(exc)) from exc
        counts = {name: count_lines(run.path(name)) for name in ARTIFACTS[stage]}
        run.mark_complete(stage, counts)
        executed.append(stage)

    report = build_report(run, config, suite, executed)
    atomic_write_text(run.path("report.json"), canonical_json(report) + "\n")
    return report


def build_report(run: RunDirectory, config: PipelineConfig, suite: ProviderSuite, executed: list[str]) -> dict:
    manifest = run.manifest()
    artifact_counts = {
        name: count_lines(run.path(name))
        for stage in STAGES
        for name in ARTIFACTS[stage]
        if stage in manifest["completed"]
    }
    n_tasks = artifact_counts.get("qa.jsonl", 0)
    cost = analytics.estimate_api_cost(
        n_tasks, calls_per_task=config.cost_calls_per_task, unit_price_per_1k=config.price_search_usd_per_1k
    )
    stats_block = {}
    trajectories_path = run.path("trajectories.jsonl")
    if trajectories_path.exists():
        rows = read_records(trajectories_path, CollectedTrajectory.from_dict)
        stats = analytics.difficulty_stats([r.trajectory for r in rows])
        stats_block = {
            "n": stats.n,
            "mean_turns": stats.mean_turns,
            "histogram": {str(k): v for k, v in stats.histogram.items()},
        }
    verdict_block = {}
    verdicts_path = run.path("verdicts.jsonl")
    if verdicts_path.exists():
        failed_by_stage: dict[str, int] = {}
        passed = 0
        for row in read_records(verdicts_path):
            if row["passed"]:
                passed += 1
            else:
                failed_by_stage[row["failed_stage"]] = failed_by_stage.get(row["failed_stage"], 0) + 1
        verdict_block = {"passed": passed, "failed_by_stage": dict(sorted(failed_by_stage.items()))}
    return {
        "completed_stages": sorted(manifest["completed"]),
        "executed_now": executed,
        "artifacts": artifact_counts,
        "difficulty": stats_block,
        "verdicts": verdict_block,
        "ledger": suite.ledger.snapshot(),
        "cost_estimate": {"n_tasks": n_tasks, "n_calls": cost.n_calls, "usd": cost.usd},
        "seed": config.seed,
        "all_stages_complete": all(stage in manifest["completed"] for stage in STAGES),
    }
