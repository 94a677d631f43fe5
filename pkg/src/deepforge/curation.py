"""Trajectory curation: sequential quality filters, scoring, and pair building.

Filters run in a fixed order and a trajectory is discarded at the first
failure: broken tool results, format faults, token-length bounds, answer
correctness, then an overall quality judgment. Scored survivors are paired
top-2 against bottom-2 per task under a strict score inequality.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from . import prompts
from .errors import JudgeProtocol
from .providers.base import ChatMessage, ChatRequest
from .records import (
    ROLE_ASSISTANT,
    SEG_PLAIN,
    SEG_TOOL_RESPONSE,
    CollectedTrajectory,
    FilterVerdict,
    PreferencePair,
    QAPair,
    ScoreCard,
    Trajectory,
)
from .tokenizers import TokenizerHandle
from .transcript import rendered_transcript, validate_trajectory

log = logging.getLogger(__name__)

STAGE_INVALID_TOOL_RESULT = "invalid_tool_result"
STAGE_FORMAT_ERROR = "format_error"
STAGE_TOKEN_LENGTH = "token_length"
STAGE_ANSWER_INCORRECT = "answer_incorrect"
STAGE_QUALITY_UNQUALIFIED = "quality_unqualified"
STAGE_ORDER = (
    STAGE_INVALID_TOOL_RESULT,
    STAGE_FORMAT_ERROR,
    STAGE_TOKEN_LENGTH,
    STAGE_ANSWER_INCORRECT,
    STAGE_QUALITY_UNQUALIFIED,
)

TOKEN_MIN = 8192
TOKEN_MAX = 131072

DEFAULT_ERROR_PATTERNS = (
    "FetchFailure(",
    "ProviderUnavailable",
    "SandboxUnavailable",
    "error: tool",
    "error: unknown tool",
    "error: invalid arguments",
    "rate limit",
    "Service Unavailable",
)


def filter_invalid_tool_results(t: Trajectory, error_patterns: Iterable[str] = DEFAULT_ERROR_PATTERNS) -> Optional[str]:
    """Returns a failure detail, or None to pass; same shape for all filters."""
    for i, message in enumerate(t.messages):
        for segment in message.segments:
            if segment.kind != SEG_TOOL_RESPONSE:
                continue
            if not segment.text.strip():
                return f"empty tool response in message {i}"
            for pattern in error_patterns:
                if pattern in segment.text:
                    return f"tool response in message {i} matches error pattern {pattern!r}"
    return None


def filter_format(t: Trajectory) -> Optional[str]:
    report = validate_trajectory(t)
    if not report.ok:
        first = report.violations[0]
        return f"format violation: {first.problem}"
    for i, message in enumerate(t.messages):
        if message.role == ROLE_ASSISTANT and any(s.kind == SEG_PLAIN for s in message.segments):
            return f"assistant message {i} has text outside recognized tags"
    return None


def filter_token_length(
    t: Trajectory,
    tokenizer: TokenizerHandle,
    min_tokens: int = TOKEN_MIN,
    max_tokens: int = TOKEN_MAX,
) -> Optional[str]:
    count = tokenizer.count(rendered_transcript(t))
    if count < min_tokens:
        return f"{count} tokens is below the minimum of {min_tokens}"
    if count > max_tokens:
        return f"{count} tokens exceeds the maximum of {max_tokens}"
    return None


def _extract_json(text: str) -> dict:
    """JSON object from a judge reply, tolerating markdown fences."""
    candidate = text.strip()
    fenced = re.search(r"```(?:json)?\s*(\{.*?\})\s*```", candidate, flags=re.DOTALL)
    if fenced:
        candidate = fenced.group(1)
    else:
        brace = re.search(r"\{.*\}", candidate, flags=re.DOTALL)
        if brace:
            candidate = brace.group(0)
    try:
        payload = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise JudgeProtocol(f"judge reply is not JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise JudgeProtocol("judge reply is not a JSON object")
    return payload


def _normalize_answer(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip()).casefold().rstrip(".")


EQUIVALENT = "equivalent"
NOT_EQUIVALENT = "not_equivalent"


def judge_correctness(question: str, gold: str, answer: str, judge) -> str:
    """Exact-match fast path, then a structured yes/no judgment."""
    if not gold.strip():
        raise ValueError("gold answer must be non-empty")
    if _normalize_answer(gold) == _normalize_answer(answer):
        return EQUIVALENT
    prompt = prompts.render_correctness_prompt(question, gold, answer)
    last_error: Optional[Exception] = None
    for _ in range(2):
        reply = judge.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
        try:
            payload = _extract_json(reply.text)
            verdict = str(payload.get("equivalent", "")).strip().lower()
            if verdict not in ("yes", "no"):
                raise JudgeProtocol(f"verdict {verdict!r} is neither yes nor no")
            return EQUIVALENT if verdict == "yes" else NOT_EQUIVALENT
        except JudgeProtocol as exc:
            last_error = exc
    raise JudgeProtocol(f"correctness judge unusable after retry: {last_error}")


@dataclass(frozen=True)
class QualityVerdict:
    qualified: bool
    reason: str
    issues: tuple[str, ...]


def judge_quality(t: Trajectory, question: str, gold: str, judge) -> QualityVerdict:
    model_response = t.final_answer or ""
    prompt = prompts.render_quality_prompt(question, gold, model_response, rendered_transcript(t))
    reply = judge.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
    payload = _extract_json(reply.text)
    score = payload.get("quality_score")
    if score not in ("Qualified", "Unqualified"):
        raise JudgeProtocol(f"quality_score {score!r} is not Qualified/Unqualified")
    if "issues" not in payload or not isinstance(payload["issues"], list):
        raise JudgeProtocol("quality reply lacks an issues list")
    issues = tuple(str(x) for x in payload["issues"])
    qualified = score == "Qualified"
    if qualified != (not issues):
        raise JudgeProtocol("issues list inconsistent with quality_score")
    return QualityVerdict(qualified=qualified, reason=str(payload.get("reason", "")), issues=issues)


@dataclass
class FilterConfig:
    min_tokens: int = TOKEN_MIN
    max_tokens: int = TOKEN_MAX
    error_patterns: tuple[str, ...] = DEFAULT_ERROR_PATTERNS


def evaluate_trajectory(
    row: CollectedTrajectory,
    qa: Optional[QAPair],
    correctness_judge,
    quality_judge,
    tokenizer: TokenizerHandle,
    config: FilterConfig,
) -> FilterVerdict:
    """Apply the five stages in order, stopping at the first failure."""
    t = row.trajectory

    detail = filter_invalid_tool_results(t, config.error_patterns)
    if detail is not None:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_INVALID_TOOL_RESULT, details=detail)

    detail = filter_format(t)
    if detail is not None:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_FORMAT_ERROR, details=detail)

    detail = filter_token_length(t, tokenizer, config.min_tokens, config.max_tokens)
    if detail is not None:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_TOKEN_LENGTH, details=detail)

    if qa is None:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_ANSWER_INCORRECT, details="no task found for trajectory")
    try:
        verdict = judge_correctness(qa.question, qa.answer, t.final_answer or "", correctness_judge)
    except JudgeProtocol as exc:
        # Judge breakdowns reject conservatively rather than waving data through.
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_ANSWER_INCORRECT, details=f"judge error: {exc}")
    if verdict != EQUIVALENT:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_ANSWER_INCORRECT, details="answer not equivalent to gold")

    try:
        quality = judge_quality(t, qa.question, qa.answer, quality_judge)
    except JudgeProtocol as exc:
        return FilterVerdict(t.id, passed=False, failed_stage=STAGE_QUALITY_UNQUALIFIED, details=f"judge error: {exc}")
    if not quality.qualified:
        return FilterVerdict(
            t.id,
            passed=False,
            failed_stage=STAGE_QUALITY_UNQUALIFIED,
            details="; ".join(quality.issues) or quality.reason,
        )

    return FilterVerdict(t.id, passed=True)


def run_filter_pipeline(
    rows: list[CollectedTrajectory],
    qa_by_task: dict[str, QAPair],
    correctness_judge,
    quality_judge,
    tokenizer: Optional[TokenizerHandle] = None,
    config: Optional[FilterConfig] = None,
) -> tuple[list[FilterVerdict], list[CollectedTrajectory]]:
    tokenizer = tokenizer or TokenizerHandle()
    config = config or FilterConfig()
    verdicts: list[FilterVerdict] = []
    kept: list[CollectedTrajectory] = []
    for row in rows:
        verdict = evaluate_trajectory(
            row, qa_by_task.get(row.task_id), correctness_judge, quality_judge, tokenizer, config
        )
        verdicts.append(verdict)
        if verdict.passed:
            kept.append(row)
    return verdicts, kept


def score_trajectories(question: str, rows: list[CollectedTrajectory], evaluator) -> list[ScoreCard]:
    """One score card per trajectory; out-of-range values are protocol faults."""
    if not rows:
        raise ValueError("nothing to score")
    cards: list[ScoreCard] = []
    for row in rows:
        prompt = prompts.render_scoring_prompt(question, rendered_transcript(row.trajectory))
        reply = evaluator.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
        payload = _extract_json(reply.text)
        dimensions: dict[str, float] = {}
        for name in ("logical_consistency", "factual_correctness", "overall_quality"):
            if name not in payload:
                raise JudgeProtocol(f"score reply missing {name}")
            value = payload[name]
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise JudgeProtocol(f"score {name} is not a number")
            if not 0 <= value <= 10:
                raise JudgeProtocol(f"score {name}={value} outside [0, 10]")
            dimensions[name] = float(value)
        cards.append(ScoreCard.build(row.trajectory.id, dimensions, task_id=row.task_id))
    return cards


def build_preference_pairs(cards: list[ScoreCard], task_id: str = "") -> list[PreferencePair]:
    """Top-2 crossed with bottom-2, keeping only strictly ordered pairs."""
    if len(cards) < 4:
        log.warning("task %s has %d scored trajectories; need 4 for pairing", task_id or "?", len(cards))
        return []
    ordered = sorted(cards, key=lambda c: (-c.aggregate, c.trajectory_id))
    top, bottom = ordered[:2], ordered[-2:]
    pairs: list[PreferencePair] = []
    for chosen in top:
        for rejected in bottom:
            if chosen.aggregate > rejected.aggregate:
                pairs.append(
                    PreferencePair(
                        task_id=task_id or chosen.task_id,
                        chosen_id=chosen.trajectory_id,
                        rejected_id=rejected.trajectory_id,
                        chosen_score=chosen.aggregate,
                        rejected_score=rejected.aggregate,
                    )
                )
    return pairs
