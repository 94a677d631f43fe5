"""Tagged transcript grammar: parsing, rendering, and structural validation.

Assistant turns interleave reasoning and actions through flat, non-nested
tags. Two tag vocabularies exist in the wild (``tool_call`` for the research
agent, ``function_call`` for the graph explorer), so the grammar is
parameterized by a profile instead of hard-coding one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    InvariantViolation,
    MalformedToolJson,
    MultipleTerminalSegments,
    UnclosedTag,
)
from .records import (
    ROLE_ASSISTANT,
    ROLE_TOOL,
    SEG_ANSWER,
    SEG_PLAIN,
    SEG_THINK,
    SEG_TOOL_CALL,
    SEG_TOOL_RESPONSE,
    STATUS_COMPLETE,
    Message,
    Segment,
    Trajectory,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrammarProfile:
    think_tag: str = "think"
    call_tag: str = "tool_call"
    response_tag: str = "tool_response"
    answer_tag: str = "answer"

    def tag_kinds(self) -> dict[str, str]:
        return {
            self.think_tag: SEG_THINK,
            self.call_tag: SEG_TOOL_CALL,
            self.response_tag: SEG_TOOL_RESPONSE,
            self.answer_tag: SEG_ANSWER,
        }

    def tag_for_kind(self, kind: str) -> str:
        for tag, k in self.tag_kinds().items():
            if k == kind:
                return tag
        raise KeyError(kind)


TOOL_CALL_PROFILE = GrammarProfile()
# Explorer conversations emit <function_call> actions and finish with a
# <result> block instead of <answer>.
FUNCTION_CALL_PROFILE = GrammarProfile(call_tag="function_call", answer_tag="result")


def _parse_tool_payload(raw: str, offset: int) -> dict:
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedToolJson(offset + exc.pos, exc.msg) from exc
    if not isinstance(payload, dict):
        raise MalformedToolJson(offset, "payload must be a JSON object")
    name = payload.get("name")
    if not isinstance(name, str) or not name:
        raise MalformedToolJson(offset, "missing or non-string 'name'")
    if "arguments" not in payload:
        raise MalformedToolJson(offset, "missing 'arguments'")
    if not isinstance(payload["arguments"], dict):
        raise MalformedToolJson(offset, "'arguments' must be a JSON object")
    return {"name": name, "arguments": payload["arguments"]}


def parse_segments(text: str, profile: GrammarProfile = TOOL_CALL_PROFILE) -> list[Segment]:
    """Split ``text`` into tagged segments; untagged non-blank runs become Plain."""
    tag_kinds = profile.tag_kinds()
    segments: list[Segment] = []
    pos = 0

    def flush_plain(chunk: str) -> None:
        stripped = chunk.strip()
        if stripped:
            log.warning("text outside recognized tags kept as plain segment: %.60r", stripped)
            segments.append(Segment(kind=SEG_PLAIN, text=stripped))

    while pos < len(text):
        # Next recognized opening tag from the current position.
        best: Optional[tuple[int, str]] = None
        for tag in tag_kinds:
            idx = text.find(f"<{tag}>", pos)
            if idx != -1 and (best is None or idx < best[0]):
                best = (idx, tag)
        if best is None:
            flush_plain(text[pos:])
            break
        start, tag = best
        flush_plain(text[pos:start])
        inner_start = start + len(tag) + 2
        close = text.find(f"</{tag}>", inner_start)
        if close == -1:
            if tag_kinds[tag] == SEG_TOOL_CALL:
                # Truncated call payloads are a JSON fault, not just a tag fault.
                _parse_tool_payload(text[inner_start:], inner_start)
            raise UnclosedTag(tag)
        inner = text[inner_start:close]
        kind = tag_kinds[tag]
        if kind == SEG_TOOL_CALL:
            payload = _parse_tool_payload(inner, inner_start)
            segments.append(Segment(kind=SEG_TOOL_CALL, text=inner, tool_call=payload))
        else:
            segments.append(Segment(kind=kind, text=inner))
        pos = close + len(tag) + 3
    return segments


def parse_assistant_message(text: str, profile: GrammarProfile = TOOL_CALL_PROFILE) -> Message:
    """Parse one assistant turn; at most one terminal (call or answer) allowed."""
    segments = parse_segments(text, profile)
    terminals = [s for s in segments if s.kind in (SEG_TOOL_CALL, SEG_ANSWER)]
    if len(terminals) > 1:
        raise MultipleTerminalSegments(len(terminals))
    return Message(role=ROLE_ASSISTANT, segments=segments)


def parse_message(text: str, role: str, profile: GrammarProfile = TOOL_CALL_PROFILE) -> Message:
    if role == ROLE_ASSISTANT:
        return parse_assistant_message(text, profile)
    if role == ROLE_TOOL:
        return Message(role=ROLE_TOOL, segments=parse_segments(text, profile))
    segments = [Segment(kind=SEG_PLAIN, text=text)] if text else []
    return Message(role=role, segments=segments)


def render_tool_call(payload: dict) -> str:
    return json.dumps(
        {"name": payload["name"], "arguments": payload["arguments"]},
        ensure_ascii=False,
        separators=(", ", ": "),
    )


def message_problems(msg: Message, profile: GrammarProfile = TOOL_CALL_PROFILE) -> list[str]:
    """Structural faults of a single message; empty list means well-formed."""
    problems: list[str] = []
    kinds = [s.kind for s in msg.segments]
    if msg.role == ROLE_ASSISTANT:
        if not kinds:
            problems.append("assistant message has no segments")
        else:
            if kinds[0] != SEG_THINK:
                problems.append("assistant message must start with a think segment")
            if kinds.count(SEG_THINK) != 1:
                problems.append("assistant message must contain exactly one think segment")
            terminal = [k for k in kinds if k in (SEG_TOOL_CALL, SEG_ANSWER)]
            if len(terminal) != 1:
                problems.append("assistant message must contain exactly one tool call or answer")
            for k in kinds:
                if k not in (SEG_THINK, SEG_TOOL_CALL, SEG_ANSWER):
                    problems.append(f"assistant message carries a {k} segment")
    elif msg.role == ROLE_TOOL:
        if kinds != [SEG_TOOL_RESPONSE]:
            problems.append("tool message must contain exactly one tool_response segment")
    else:
        for k in kinds:
            if k != SEG_PLAIN:
                problems.append(f"{msg.role} message carries a {k} segment")
    # A segment body containing its own closing tag cannot round-trip.
    for seg in msg.segments:
        if seg.kind == SEG_PLAIN:
            continue
        if seg.kind == SEG_TOOL_CALL:
            closer = f"</{profile.call_tag}>"
            if closer in render_tool_call(seg.tool_call):
                problems.append(f"tool call payload contains reserved tag {closer}")
            continue
        closer = f"</{profile.tag_for_kind(seg.kind)}>"
        if closer in seg.text:
            problems.append(f"{seg.kind} segment text contains reserved tag {closer}")
    return problems


def render_message(msg: Message, profile: GrammarProfile = TOOL_CALL_PROFILE) -> str:
    """Inverse of parse for well-formed messages: parse(render(m)) == m."""
    problems = message_problems(msg, profile)
    if problems:
        raise InvariantViolation("; ".join(problems))
    return render_segments(msg.segments, profile)


def render_segments(segments: list[Segment], profile: GrammarProfile = TOOL_CALL_PROFILE) -> str:
    parts: list[str] = []
    for seg in segments:
        if seg.kind == SEG_PLAIN:
            parts.append(seg.text)
        elif seg.kind == SEG_TOOL_CALL:
            tag = profile.call_tag
            parts.append(f"<{tag}>{render_tool_call(seg.tool_call)}</{tag}>")
        else:
            tag = profile.tag_for_kind(seg.kind)
            parts.append(f"<{tag}>{seg.text}</{tag}>")
    return "".join(parts)


def segments_equivalent(a: Segment, b: Segment) -> bool:
    if a.kind != b.kind:
        return False
    if a.kind == SEG_TOOL_CALL:
        return a.tool_call == b.tool_call
    return a.text == b.text


def messages_equivalent(a: Message, b: Message) -> bool:
    return (
        a.role == b.role
        and len(a.segments) == len(b.segments)
        and all(segments_equivalent(x, y) for x, y in zip(a.segments, b.segments))
    )


def rendered_transcript(trajectory: Trajectory, profile: GrammarProfile = TOOL_CALL_PROFILE) -> str:
    """Lenient full-text rendering used for hashing and token accounting."""
    return "\n".join(render_segments(m.segments, profile) for m in trajectory.messages)


@dataclass
class FormatViolation:
    message_index: Optional[int]
    problem: str

    def to_dict(self) -> dict:
        return {"message_index": self.message_index, "problem": self.problem}


@dataclass
class FormatReport:
    violations: list[FormatViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, index: Optional[int], problem: str) -> None:
        self.violations.append(FormatViolation(index, problem))


def validate_trajectory(t: Trajectory, profile: GrammarProfile = TOOL_CALL_PROFILE) -> FormatReport:
    """Check the transcript invariants; violations are data, not exceptions.

    Rules: every message is well-formed for its role; each assistant tool
    call is immediately followed by exactly one tool message; tool messages
    appear only after a tool call; a complete trajectory ends with an answer
    matching ``final_answer``; ``tool_call_count`` matches the transcript.
    """
    report = FormatReport()
    for i, msg in enumerate(t.messages):
        for problem in message_problems(msg, profile):
            report.add(i, problem)

    for i, msg in enumerate(t.messages):
        if msg.role == ROLE_ASSISTANT and msg.tool_calls():
            nxt = t.messages[i + 1] if i + 1 < len(t.messages) else None
            if nxt is None or nxt.role != ROLE_TOOL:
                report.add(i, f"missing tool response after message {i}")
            after = t.messages[i + 2] if i + 2 < len(t.messages) else None
            if after is not None and after.role == ROLE_TOOL:
                report.add(i + 2, "more than one tool response for a single tool call")
        if msg.role == ROLE_TOOL:
            prev = t.messages[i - 1] if i > 0 else None
            if prev is None or prev.role != ROLE_ASSISTANT or not prev.tool_calls():
                report.add(i, "tool message not preceded by an assistant tool call")

    if t.status == STATUS_COMPLETE:
        last = t.messages[-1] if t.messages else None
        answer = last.answer_segment() if last is not None and last.role == ROLE_ASSISTANT else None
        if answer is None:
            report.add(None, "complete trajectory does not end with an assistant answer")
        elif t.final_answer != answer.text:
            report.add(None, "final_answer does not match the answer segment")

    actual_calls = sum(len(m.tool_calls()) for m in t.messages)
    if actual_calls != t.tool_call_count:
        report.add(None, f"tool_call_count is {t.tool_call_count}, transcript has {actual_calls}")
    return report


def trajectory_id(query: str, messages: list[Message], status: str) -> str:
    """Content-hash identifier; stable across runs for identical transcripts."""
    import hashlib

    body = "\n".join(render_segments(m.segments) for m in messages)
    digest = hashlib.sha256(f"{status}\x00{query}\x00{body}".encode("utf-8")).hexdigest()
    return digest[:16]
