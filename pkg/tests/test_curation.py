import itertools
import json
import random

import pytest

from deepforge.curation import (
    EQUIVALENT,
    NOT_EQUIVALENT,
    STAGE_ANSWER_INCORRECT,
    STAGE_FORMAT_ERROR,
    STAGE_INVALID_TOOL_RESULT,
    STAGE_ORDER,
    STAGE_QUALITY_UNQUALIFIED,
    STAGE_TOKEN_LENGTH,
    FilterConfig,
    build_preference_pairs,
    evaluate_trajectory,
    filter_format,
    filter_invalid_tool_results,
    filter_token_length,
    judge_correctness,
    judge_quality,
    run_filter_pipeline,
    score_trajectories,
)
from deepforge.errors import JudgeProtocol
from deepforge.providers import ChatRequest, CostLedger, InstrumentedChat, MockChatProvider, ScriptedChatProvider
from deepforge.records import (
    LANG_EN,
    CollectedTrajectory,
    QAPair,
    ScoreCard,
    Segment,
    SEG_PLAIN,
)
from deepforge.tokenizers import TokenizerHandle
from deepforge.transcript import rendered_transcript

from conftest import answer, assistant, build_trajectory, think


def chat(*responses):
    return InstrumentedChat(ScriptedChatProvider(list(responses)), CostLedger())


QUALIFIED = json.dumps({"quality_score": "Qualified", "reason": "ok", "issues": []})
UNQUALIFIED = json.dumps(
    {"quality_score": "Unqualified", "reason": "bad", "issues": ["Tool Call Hallucination"]}
)


def scripted_judges(quality_reply=QUALIFIED, correctness_reply='{"equivalent": "yes"}'):
    """Marker-routing judge provider usable for both judge roles."""

    def handler(request: ChatRequest):
        text = "\n".join(m.content for m in request.messages)
        if "professional data quality evaluation expert" in text:
            return quality_reply
        if "semantically equivalent to the ground truth" in text:
            return correctness_reply
        return None

    return InstrumentedChat(MockChatProvider(handlers=[handler]), CostLedger())


# --- individual filters ------------------------------------------------------


def test_empty_tool_response_fails():
    t = build_trajectory(turns=1, observation="   ")
    assert filter_invalid_tool_results(t) is not None


def test_error_marker_in_tool_response_fails():
    t = build_trajectory(turns=1, observation="FetchFailure(503) while fetching page")
    detail = filter_invalid_tool_results(t)
    assert detail is not None and "FetchFailure(" in detail


def test_clean_tool_responses_pass():
    assert filter_invalid_tool_results(build_trajectory(turns=2)) is None


def test_format_filter_flags_missing_think():
    t = build_trajectory(turns=0)
    t.messages[-1] = assistant(answer("answer without think"), think("late"))
    assert filter_format(t) is not None


def test_format_filter_flags_plain_drift():
    t = build_trajectory(turns=0)
    t.messages[-1].segments.insert(0, Segment(kind=SEG_PLAIN, text="stray"))
    assert filter_format(t) is not None


def test_format_filter_passes_clean():
    assert filter_format(build_trajectory(turns=2)) is None


def pad_to_tokens(t, target_tokens):
    """Grow the first think segment until the rendered transcript counts exactly."""
    tok = TokenizerHandle()
    rendered = rendered_transcript(t)
    deficit_chars = target_tokens * 4 - len(rendered)
    assert deficit_chars >= 0, "fixture already too large"
    for message in t.messages:
        for segment in message.segments:
            if segment.kind == "think":
                segment.text = segment.text + "x" * deficit_chars
                assert TokenizerHandle().count(rendered_transcript(t)) == target_tokens
                return t
    raise AssertionError("no think segment found")


@pytest.mark.parametrize(
    "tokens,expected_pass",
    [(8191, False), (8192, True), (131072, True), (131073, False)],
)
def test_token_length_boundaries_inclusive(tokens, expected_pass):
    t = pad_to_tokens(build_trajectory(turns=1), tokens)
    detail = filter_token_length(t, TokenizerHandle())
    assert (detail is None) == expected_pass


def test_token_length_respects_custom_bounds():
    t = build_trajectory(turns=0)
    assert filter_token_length(t, TokenizerHandle(), min_tokens=1, max_tokens=10_000) is None


# --- correctness judge ------------------------------------------------------------


def test_exact_match_fast_path_skips_judge():
    never_called = chat()  # raises if consulted
    assert judge_correctness("q", "Paris", "Paris", never_called) == EQUIVALENT
    assert judge_correctness("q", "  PARIS ", "paris.", never_called) == EQUIVALENT


def test_judge_decides_non_exact_answers():
    yes = scripted_judges(correctness_reply='{"equivalent": "yes"}')
    assert judge_correctness("q", "Sword in the Stone", "the Sword in the Stone recipe item", yes) == EQUIVALENT
    no = scripted_judges(correctness_reply='{"equivalent": "no"}')
    assert judge_correctness("q", "Paris", "London", no) == NOT_EQUIVALENT


def test_judge_prose_without_verdict_is_protocol_error():
    judge = chat("well, it depends on interpretation", "still prose")
    with pytest.raises(JudgeProtocol):
        judge_correctness("q", "Paris", "London", judge)


def test_judge_fenced_json_accepted():
    judge = chat('```json\n{"equivalent": "no"}\n```')
    assert judge_correctness("q", "Paris", "London", judge) == NOT_EQUIVALENT


def test_empty_gold_rejected():
    with pytest.raises(ValueError):
        judge_correctness("q", "   ", "x", chat())


# --- quality judge ------------------------------------------------------------------


def test_quality_qualified():
    verdict = judge_quality(build_trajectory(), "q", "gold", scripted_judges())
    assert verdict.qualified
    assert verdict.issues == ()


def test_quality_unqualified_with_issue():
    verdict = judge_quality(build_trajectory(), "q", "gold", scripted_judges(quality_reply=UNQUALIFIED))
    assert not verdict.qualified
    assert verdict.issues == ("Tool Call Hallucination",)


def test_quality_missing_issues_key_is_protocol_error():
    reply = json.dumps({"quality_score": "Qualified", "reason": "ok"})
    with pytest.raises(JudgeProtocol):
        judge_quality(build_trajectory(), "q", "gold", scripted_judges(quality_reply=reply))


def test_quality_inconsistent_issues_is_protocol_error():
    reply = json.dumps({"quality_score": "Qualified", "reason": "ok", "issues": ["but listed"]})
    with pytest.raises(JudgeProtocol):
        judge_quality(build_trajectory(), "q", "gold", scripted_judges(quality_reply=reply))


# --- pipeline order ------------------------------------------------------------------


def make_row(violation=None, index=0):
    """A trajectory violating exactly one stage (None for fully clean)."""
    gold = "the answer"
    t = build_trajectory(query=f"task {index}?", turns=1, final=gold)
    if violation == STAGE_INVALID_TOOL_RESULT:
        t.messages[2].segments[0].text = "" if index % 2 == 0 else "ProviderUnavailable: upstream"
    elif violation == STAGE_FORMAT_ERROR:
        if index % 2 == 0:
            t.messages[-1].segments = [answer(gold)]  # missing think
        else:
            t.messages[-1].segments.insert(0, Segment(kind=SEG_PLAIN, text="drift"))
    elif violation == STAGE_ANSWER_INCORRECT:
        t.messages[-1].segments[-1] = answer("a wrong answer")
        t.final_answer = "a wrong answer"
    elif violation == STAGE_QUALITY_UNQUALIFIED:
        t.messages[0].segments[0].text += " [[quality:bad]]"
    if violation == STAGE_TOKEN_LENGTH:
        pad_to_tokens(t, 8191 if index % 2 == 0 else 131073)
    else:
        pad_to_tokens(t, 8192 + 16 * index)
    qa = QAPair(question=f"task {index}?", answer=gold, language=LANG_EN,
                provenance={"graph_id": f"g{index}"}, pruned=True)
    return CollectedTrajectory(task_id=qa.task_id(), rollout_index=0, trajectory=t), qa


def routing_judge():
    def handler(request: ChatRequest):
        text = "\n".join(m.content for m in request.messages)
        if "professional data quality evaluation expert" in text:
            if "[[quality:bad]]" in text:
                return UNQUALIFIED
            return QUALIFIED
        if "semantically equivalent to the ground truth" in text:
            return '{"equivalent": "no"}'
        return None

    return InstrumentedChat(MockChatProvider(handlers=[handler]), CostLedger())


def reference_stage(row, qa, tokenizer):
    """Evaluate all five predicates independently; first failure in fixed order."""
    t = row.trajectory
    failures = set()
    if filter_invalid_tool_results(t) is not None:
        failures.add(STAGE_INVALID_TOOL_RESULT)
    if filter_format(t) is not None:
        failures.add(STAGE_FORMAT_ERROR)
    if filter_token_length(t, tokenizer) is not None:
        failures.add(STAGE_TOKEN_LENGTH)
    normalized = lambda s: " ".join(s.strip().casefold().rstrip(".").split())
    if normalized(t.final_answer or "") != normalized(qa.answer):
        failures.add(STAGE_ANSWER_INCORRECT)
    if "[[quality:bad]]" in rendered_transcript(t):
        failures.add(STAGE_QUALITY_UNQUALIFIED)
    for stage in STAGE_ORDER:
        if stage in failures:
            return stage
    return None


def test_each_stage_violation_caught_at_its_stage():
    judge = routing_judge()
    tokenizer = TokenizerHandle()
    cases = []
    for i, stage in enumerate(STAGE_ORDER):
        for j in (0, 1):
            cases.append((make_row(stage, index=i * 2 + j), stage))
    for (row, qa), stage in cases:
        verdict = evaluate_trajectory(row, qa, judge, judge, tokenizer, FilterConfig())
        assert not verdict.passed
        assert verdict.failed_stage == stage
        assert verdict.failed_stage == reference_stage(row, qa, tokenizer)


def test_clean_rows_kept_and_verdict_count_matches():
    judge = routing_judge()
    rows, qa_by_task = [], {}
    for i in range(5):
        row, qa = make_row(None, index=i)
        rows.append(row)
        qa_by_task[row.task_id] = qa
    verdicts, kept = run_filter_pipeline(rows, qa_by_task, judge, judge)
    assert len(verdicts) == len(rows)
    assert all(v.passed for v in verdicts)
    assert [k.trajectory.id for k in kept] == [r.trajectory.id for r in rows]


def test_pipeline_short_circuits_before_judges():
    # A stage-1 violation must never consult a judge: scripted chat with zero
    # responses raises on use.
    row, qa = make_row(STAGE_INVALID_TOOL_RESULT)
    verdict = evaluate_trajectory(row, qa, chat(), chat(), TokenizerHandle(), FilterConfig())
    assert verdict.failed_stage == STAGE_INVALID_TOOL_RESULT


def test_correctness_judge_breakdown_rejects_conservatively():
    row, qa = make_row(None)
    # A non-exact answer forces a judge call; the broken judge must reject.
    row.trajectory.messages[-1].segments[-1] = answer("the answer, am I right")
    row.trajectory.final_answer = "the answer, am I right"
    broken = chat("no json here", "still none")
    verdict = evaluate_trajectory(row, qa, broken, broken, TokenizerHandle(), FilterConfig())
    assert not verdict.passed
    assert verdict.failed_stage == STAGE_ANSWER_INCORRECT
    assert "judge error" in verdict.details


def test_quality_judge_breakdown_rejects_conservatively():
    row, qa = make_row(None)
    broken = chat("no json here")  # reached only by the quality stage
    verdict = evaluate_trajectory(row, qa, broken, broken, TokenizerHandle(), FilterConfig())
    assert not verdict.passed
    assert verdict.failed_stage == STAGE_QUALITY_UNQUALIFIED
    assert "judge error" in verdict.details


def test_missing_task_rejects_at_answer_stage():
    row, _ = make_row(None)
    verdicts, kept = run_filter_pipeline([row], {}, chat(), chat())
    assert kept == []
    assert verdicts[0].failed_stage == STAGE_ANSWER_INCORRECT


def test_empty_input_empty_output():
    verdicts, kept = run_filter_pipeline([], {}, chat(), chat())
    assert verdicts == [] and kept == []


# --- scoring ------------------------------------------------------------------------


def scoring_judge(values):
    replies = iter(values)

    def handler(request: ChatRequest):
        text = "\n".join(m.content for m in request.messages)
        if "Score the trajectory below on three dimensions" in text:
            v = next(replies)
            return json.dumps(
                {"logical_consistency": v, "factual_correctness": v, "overall_quality": v}
            )
        return None

    return InstrumentedChat(MockChatProvider(handlers=[handler]), CostLedger())


def _rows(n):
    return [CollectedTrajectory(task_id="t", rollout_index=i, trajectory=build_trajectory(query=f"q{i}?")) for i in range(n)]


def test_score_trajectories_builds_cards():
    cards = score_trajectories("q?", _rows(3), scoring_judge([9.0, 5.5, 2.0]))
    assert [c.aggregate for c in cards] == [9.0, 5.5, 2.0]
    assert all(c.task_id == "t" for c in cards)


def test_out_of_range_score_is_protocol_error_not_clamped():
    with pytest.raises(JudgeProtocol):
        score_trajectories("q?", _rows(1), scoring_judge([11.0]))


def test_single_trajectory_single_card():
    cards = score_trajectories("q?", _rows(1), scoring_judge([7.25]))
    assert len(cards) == 1


def test_score_empty_rejected():
    with pytest.raises(ValueError):
        score_trajectories("q?", [], scoring_judge([]))


# --- preference pairs ------------------------------------------------------------------


def cards_from(aggregates):
    return [
        ScoreCard.build(f"traj-{i:02d}", {
            "logical_consistency": a, "factual_correctness": a, "overall_quality": a,
        }, task_id="task")
        for i, a in enumerate(aggregates)
    ]


def brute_force_pairs(cards):
    """Oracle: {top-2 x bottom-2} intersected with strict inequality."""
    if len(cards) < 4:
        return set()
    ordered = sorted(cards, key=lambda c: (-c.aggregate, c.trajectory_id))
    top, bottom = ordered[:2], ordered[-2:]
    return {
        (c.trajectory_id, r.trajectory_id)
        for c, r in itertools.product(top, bottom)
        if c.aggregate > r.aggregate
    }


def test_four_distinct_scores_make_four_pairs():
    pairs = build_preference_pairs(cards_from([9, 8, 3, 2]))
    got = {(p.chosen_id, p.rejected_id) for p in pairs}
    assert got == {("traj-00", "traj-02"), ("traj-00", "traj-03"), ("traj-01", "traj-02"), ("traj-01", "traj-03")}
    assert all(p.chosen_score > p.rejected_score for p in pairs)


def test_all_tied_scores_make_zero_pairs():
    assert build_preference_pairs(cards_from([5, 5, 5, 5])) == []


def test_three_way_tie_keeps_only_strict_pairs():
    pairs = build_preference_pairs(cards_from([7, 7, 7, 2]))
    got = {(p.chosen_id, p.rejected_id) for p in pairs}
    # Ids tie-break the ordering: top-2 are traj-00/traj-01, bottom-2 traj-02/traj-03.
    assert got == {("traj-00", "traj-03"), ("traj-01", "traj-03")}


def test_fewer_than_four_gives_empty_with_warning(caplog):
    with caplog.at_level("WARNING"):
        assert build_preference_pairs(cards_from([5, 4, 3])) == []
    assert any("need 4" in r.message for r in caplog.records)


def test_500_random_multisets_match_brute_force():
    rng = random.Random(777)
    for _ in range(500):
        n = rng.randint(4, 8)
        aggregates = [round(rng.uniform(0, 10) * 2) / 2 for _ in range(n)]
        cards = cards_from(aggregates)
        pairs = build_preference_pairs(cards)
        got = {(p.chosen_id, p.rejected_id) for p in pairs}
        assert got == brute_force_pairs(cards)
        assert len(pairs) <= 4
        assert all(p.chosen_score > p.rejected_score for p in pairs)


def test_quality_judge_accepts_fenced_json():
    fenced = "```json\n" + QUALIFIED + "\n```"
    verdict = judge_quality(build_trajectory(), "q", "gold", scripted_judges(quality_reply=fenced))
    assert verdict.qualified
