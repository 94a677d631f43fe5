import json
import random
from pathlib import Path

import pytest

from deepforge.records import (
    ROLE_ASSISTANT,
    ROLE_TOOL,
    ROLE_USER,
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
from deepforge.transcript import trajectory_id

FIXTURES = Path(__file__).parent / "fixtures"


def think(text: str) -> Segment:
    return Segment(kind=SEG_THINK, text=text)


def answer(text: str) -> Segment:
    return Segment(kind=SEG_ANSWER, text=text)


def tool_call(name: str, arguments: dict) -> Segment:
    return Segment(kind=SEG_TOOL_CALL, text="", tool_call={"name": name, "arguments": arguments})


def tool_response(text: str) -> Segment:
    return Segment(kind=SEG_TOOL_RESPONSE, text=text)


def plain(text: str) -> Segment:
    return Segment(kind=SEG_PLAIN, text=text)


def assistant(*segments: Segment) -> Message:
    return Message(role=ROLE_ASSISTANT, segments=list(segments))


def tool_msg(text: str) -> Message:
    return Message(role=ROLE_TOOL, segments=[tool_response(text)])


def user(text: str) -> Message:
    return Message(role=ROLE_USER, segments=[plain(text)])


def build_trajectory(
    query: str = "what is the answer?",
    turns: int = 1,
    final: str = "the answer",
    status: str = STATUS_COMPLETE,
    observation: str = '{"tool": "search", "result": [{"title": "t", "snippet": "s"}]}',
) -> Trajectory:
    """A well-formed trajectory with ``turns`` tool-call rounds then an answer."""
    messages = [user(query)]
    for i in range(turns):
        messages.append(assistant(think(f"step {i}"), tool_call("search", {"query": [f"q{i}"]})))
        messages.append(tool_msg(observation))
    messages.append(assistant(think("finish"), answer(final)))
    return Trajectory(
        id=trajectory_id(query, messages, status),
        query=query,
        messages=messages,
        final_answer=final if status == STATUS_COMPLETE else None,
        tool_call_count=turns,
        status=status,
    )


@pytest.fixture
def research_transcript() -> dict:
    with open(FIXTURES / "honey_density_transcript.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xD5EED)
