"""Command-line entry point: stage commands, analytics, and the full run."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analytics, curation, losses, pipeline
from .config import PipelineConfig, load_config
from .errors import ConfigError, DeepForgeError, ProviderUnavailable
from .records import CollectedTrajectory, QAPair
from .storage import read_records
from .tokenizers import TokenizerHandle

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_PROVIDER = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepforge", description="Research-task synthesis and curation pipeline")
    parser.add_argument("--config", help="path to a flat key=value config file")
    parser.add_argument("--seed", type=int, help="run seed (overrides run.seed)")
    parser.add_argument("--mock", action="store_true", help="force deterministic offline providers")
    parser.add_argument("--workers", type=int, help="worker count (overrides run.workers)")
    parser.add_argument("--quiet", action="store_true", help="only warnings and errors")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand", help="grow the seed entity pool")
    p.add_argument("--out", required=True, help="output entities.jsonl")

    p = sub.add_parser("explore", help="build entity graphs from seed entities")
    p.add_argument("--entities", required=True)
    p.add_argument("--out", required=True, help="output graphs.jsonl")
    p.add_argument("--depth-dist", help="e.g. '2:0.3,3:0.5,4:0.2'")

    p = sub.add_parser("genqa", help="generate question-answer pairs from graphs")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True, help="output qa.jsonl")
    p.add_argument("--skip-prune", action="store_true")
    p.add_argument("--skip-validate", action="store_true")

    p = sub.add_parser("collect", help="sample agent trajectories for each task")
    p.add_argument("--qa", required=True)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--out", required=True, help="output trajectories.jsonl")
    p.add_argument("--max-turns", type=int)
    p.add_argument("--max-context", type=int)

    p = sub.add_parser("filter", help="run the five-stage quality filter")
    p.add_argument("--in", dest="input", required=True, help="trajectories.jsonl")
    p.add_argument("--qa", required=True, help="qa.jsonl with gold answers")
    p.add_argument("--out", required=True, help="kept trajectories")
    p.add_argument("--verdicts", required=True, help="per-trajectory verdicts")

    p = sub.add_parser("dpo-pairs", help="score kept trajectories and build preference pairs")
    p.add_argument("--in", dest="input", required=True, help="kept.jsonl")
    p.add_argument("--qa", required=True, help="qa.jsonl with task questions")
    p.add_argument("--scores", required=True, help="score cards (reused if present)")
    p.add_argument("--out", required=True, help="output pairs.jsonl")

    p = sub.add_parser("stats", help="difficulty statistics over trajectories")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--csv", help="write the histogram as CSV")

    p = sub.add_parser("cost-estimate", help="search API cost model")
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--calls-per-task", type=float, default=15.0)
    p.add_argument("--unit-price", type=float, default=1.0, help="USD per 1000 calls")

    p = sub.add_parser("run", help="run all stages end to end")
    p.add_argument("--out", help="run directory (or run.out_dir in config)")
    p.add_argument("--until", choices=pipeline.STAGES, help="stop after this stage")

    sub.add_parser("losscheck", help="verify the training-loss kernels numerically")

    return parser


def _configure(args) -> PipelineConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.mock:
        config.mock = True
    if args.workers is not None:
        config.workers = args.workers
    config.validate()
    return config


def _cmd_expand(args, config: PipelineConfig) -> int:
    suite = pipeline.build_suite(config)
    from .expansion import run_stage1
    from .records import normalize_name
    from .resume import write_sorted

    stoplist = None
    if config.stage1_stoplist_path:
        text = Path(config.stage1_stoplist_path).read_text(encoding="utf-8")
        stoplist = frozenset(normalize_name(line) for line in text.splitlines() if line.strip())
    seed_set = run_stage1(
        suite,
        batch_size=config.stage1_batch_size,
        workers=config.stage1_effective_workers(),
        target_pool_size=config.stage1_target_pool_size,
        top_k=config.stage1_top_k,
        state_path=Path(args.out).with_suffix(".state.jsonl"),
        stoplist=stoplist,
    )
    count = write_sorted(args.out, [e.to_dict() for e in seed_set.entities], key_fn=lambda r: r["name"])
    print(f"entities: {count} (from {seed_set.stats.nouns_generated} nouns, {seed_set.stats.urls_visited} urls)")
    return EXIT_OK


def _cmd_explore(args, config: PipelineConfig) -> int:
    if args.depth_dist:
        config.stage2_depth_dist = args.depth_dist
    suite = pipeline.build_suite(config)
    from .expansion import high_frequency_names
    from .explorer import ExploreBudget, explore_all, parse_depth_dist
    from .records import Entity

    entities = read_records(args.entities, Entity.from_dict)
    count = explore_all(
        suite,
        entities,
        dist=parse_depth_dist(config.stage2_depth_dist),
        budget=ExploreBudget(config.stage2_max_agent_turns, config.stage2_max_calls),
        out_path=args.out,
        run_seed=config.seed,
        frontier_k=config.stage2_frontier_k,
        high_freq=high_frequency_names(),
        workers=config.workers,
    )
    print(f"graphs: {count}")
    return EXIT_OK


def _cmd_genqa(args, config: PipelineConfig) -> int:
    if args.skip_prune:
        config.qa_skip_prune = True
    if args.skip_validate:
        config.qa_skip_validate = True
    suite = pipeline.build_suite(config)
    from . import qaforge
    from .records import EntityGraph

    graphs = read_records(args.graphs, EntityGraph.from_dict)
    pairs = qaforge.run_stage2(
        suite,
        graphs,
        out_path=args.out,
        skip_prune=config.qa_skip_prune,
        skip_validate=config.qa_skip_validate,
        workers=config.workers,
    )
    print(f"qa pairs: {len(pairs)}")
    return EXIT_OK


def _cmd_collect(args, config: PipelineConfig) -> int:
    if args.rollouts:
        config.collect_rollouts = args.rollouts
    if args.max_turns:
        config.collect_max_turns = args.max_turns
    if args.max_context:
        config.collect_max_context_tokens = args.max_context
    suite = pipeline.build_suite(config)
    from .agent import RunLimits, default_registry, sample_trajectories
    from .providers.base import ExecLimits

    qa_pairs = read_records(args.qa, QAPair.from_dict)
    limits = RunLimits(config.collect_max_turns, config.collect_max_context_tokens)
    rows = sample_trajectories(
        qa_pairs,
        rollouts=config.collect_rollouts,
        policy_factory=pipeline._policy_factory(config, suite),
        registry=default_registry(suite, ExecLimits(wall_seconds=limits.per_tool_timeout_seconds)),
        limits=limits,
        out_path=args.out,
        workers=config.workers,
    )
    print(f"trajectories: {len(rows)}")
    return EXIT_OK


def _cmd_filter(args, config: PipelineConfig) -> int:
    suite = pipeline.build_suite(config)
    from .resume import write_sorted
    from .agent import rollout_key

    rows = read_records(args.input, CollectedTrajectory.from_dict)
    qa_by_task = {qa.task_id(): qa for qa in read_records(args.qa, QAPair.from_dict)}
    filter_config = curation.FilterConfig(config.filter_min_tokens, config.filter_max_tokens)
    verdicts, kept = curation.run_filter_pipeline(
        rows, qa_by_task, suite.chat, suite.chat, TokenizerHandle(), filter_config
    )
    write_sorted(args.verdicts, [v.to_dict() for v in verdicts], key_fn=lambda r: r["trajectory_id"])
    count = write_sorted(args.out, [k.to_dict() for k in kept], key_fn=rollout_key)
    print(f"kept: {count} of {len(rows)}")
    return EXIT_OK


def _cmd_dpo_pairs(args, config: PipelineConfig) -> int:
    suite = pipeline.build_suite(config)
    from .records import ScoreCard
    from .resume import write_sorted

    kept = read_records(args.input, CollectedTrajectory.from_dict)
    qa_by_task = {qa.task_id(): qa for qa in read_records(args.qa, QAPair.from_dict)}
    by_task: dict[str, list[CollectedTrajectory]] = {}
    for row in kept:
        by_task.setdefault(row.task_id, []).append(row)

    scores_path = Path(args.scores)
    if scores_path.exists():
        cards = read_records(scores_path, ScoreCard.from_dict)
    else:
        cards = []
        for task_id in sorted(by_task):
            qa = qa_by_task.get(task_id)
            if qa is None:
                continue
            cards.extend(curation.score_trajectories(qa.question, by_task[task_id], suite.chat))
        write_sorted(scores_path, [c.to_dict() for c in cards], key_fn=lambda r: (r["task_id"], r["trajectory_id"]))

    pairs = []
    cards_by_task: dict[str, list] = {}
    for card in cards:
        cards_by_task.setdefault(card.task_id, []).append(card)
    for task_id in sorted(cards_by_task):
        pairs.extend(curation.build_preference_pairs(cards_by_task[task_id], task_id=task_id))
    count = write_sorted(
        args.out, [p.to_dict() for p in pairs], key_fn=lambda r: (r["task_id"], r["chosen_id"], r["rejected_id"])
    )
    print(f"preference pairs: {count}")
    return EXIT_OK


def _cmd_stats(args, config: PipelineConfig) -> int:
    rows = read_records(args.input, CollectedTrajectory.from_dict)
    stats = analytics.difficulty_stats([r.trajectory for r in rows])
    if stats.n == 0:
        print("n=0 mean=undefined")
    else:
        print(f"n={stats.n} mean={stats.mean_turns:.4f}")
        for calls, count in sorted(stats.histogram.items()):
            print(f"  {calls:4d} calls: {count}")
    if args.csv:
        analytics.stats_to_csv(stats, args.csv)
        print(f"histogram written to {args.csv}")
    return EXIT_OK


def _cmd_cost(args, config: PipelineConfig) -> int:
    estimate = analytics.estimate_api_cost(args.tasks, args.calls_per_task, args.unit_price)
    print(f"tasks={args.tasks} calls={estimate.n_calls} cost=${estimate.usd:.2f}")
    return EXIT_OK


def _cmd_run(args, config: PipelineConfig) -> int:
    out_dir = args.out or config.out_dir
    if not out_dir:
        raise ConfigError("run requires --out or run.out_dir in the config")
    report = pipeline.run_pipeline(config, out_dir, until=args.until)
    if not report["executed_now"] and report["all_stages_complete"]:
        print("all stages complete")
    for name, count in sorted(report["artifacts"].items()):
        print(f"{name}: {count}")
    print(f"cost estimate: ${report['cost_estimate']['usd']:.2f} for {report['cost_estimate']['n_calls']} calls")
    return EXIT_OK


def _cmd_losscheck(args, config: PipelineConfig) -> int:
    checks = losses.self_check()
    failed = 0
    for name, ok, detail in checks:
        marker = "PASS" if ok else "FAIL"
        print(f"[{marker}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} of {len(checks)} checks failed")
        return EXIT_STAGE
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


_COMMANDS = {
    "expand": _cmd_expand,
    "explore": _cmd_explore,
    "genqa": _cmd_genqa,
    "collect": _cmd_collect,
    "filter": _cmd_filter,
    "dpo-pairs": _cmd_dpo_pairs,
    "stats": _cmd_stats,
    "cost-estimate": _cmd_cost,
    "run": _cmd_run,
    "losscheck": _cmd_losscheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in ("stats", "cost-estimate", "losscheck"):
            config = PipelineConfig()  # analytics commands need no provider config
        else:
            config = _configure(args)
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderUnavailable as exc:
        print(f"provider outage: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except DeepForgeError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
