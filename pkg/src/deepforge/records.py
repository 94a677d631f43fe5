"""Typed records flowing between pipeline stages, plus their JSON codecs.

Every record is a plain value object with ``to_dict``/``from_dict`` so the
line-delimited persistence layer stays schema-exact. Field names on the wire
are snake_case and identical to the attribute names here.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import InvariantViolation

# Roles and segment kinds as wire strings.
ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
ROLE_TOOL = "tool"
ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT, ROLE_TOOL)

SEG_THINK = "think"
SEG_TOOL_CALL = "tool_call"
SEG_TOOL_RESPONSE = "tool_response"
SEG_ANSWER = "answer"
SEG_PLAIN = "plain"
SEGMENT_KINDS = (SEG_THINK, SEG_TOOL_CALL, SEG_TOOL_RESPONSE, SEG_ANSWER, SEG_PLAIN)

STATUS_COMPLETE = "complete"
STATUS_TRUNCATED = "truncated"
STATUS_FAILED = "failed"
STATUSES = (STATUS_COMPLETE, STATUS_TRUNCATED, STATUS_FAILED)

LANG_EN = "en"
LANG_ZH = "zh"

SCORE_DIMENSIONS = ("logical_consistency", "factual_correctness", "overall_quality")

_WS_RE = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Case-fold, trim, and collapse internal whitespace."""
    return _WS_RE.sub(" ", name.strip()).casefold()


def canonical_json(obj: Any) -> str:
    """Deterministic JSON used for hashing and artifact files."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def content_id(*parts: Any) -> str:
    """Stable 16-hex identifier derived from the given payload."""
    digest = hashlib.sha256(canonical_json(list(parts)).encode("utf-8")).hexdigest()
    return digest[:16]


def derive_seed(base: int, *parts: Any) -> int:
    """Per-item RNG seed; schedule-independent because it ignores run order."""
    payload = canonical_json([base, *parts]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def detect_language(text: str) -> str:
    """Script heuristic: zh when CJK codepoints dominate the letters."""
    cjk = sum(1 for ch in text if "一" <= ch <= "鿿")
    letters = sum(1 for ch in text if ch.isalpha())
    if letters and cjk / letters > 0.2:
        return LANG_ZH
    return LANG_EN


@dataclass
class Entity:
    name: str
    description: Optional[str] = None
    source_url: Optional[str] = None
    origin_noun: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise InvariantViolation("entity name must be non-empty")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "source_url": self.source_url,
            "origin_noun": self.origin_noun,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Entity":
        return cls(
            name=data["name"],
            description=data.get("description"),
            source_url=data.get("source_url"),
            origin_noun=data.get("origin_noun"),
        )


@dataclass
class EntityRecord:
    """One explored node: facts about the entity plus its outgoing relations."""

    entity: Entity
    entity_self: list[str] = field(default_factory=list)
    entity_relations: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.entity_self and not self.entity_relations:
            raise InvariantViolation(f"record for {self.entity.name!r} is fully empty")
        for fact in self.entity_self:
            if not fact or not fact.strip():
                raise InvariantViolation("empty fact string")
        for target in self.entity_relations:
            if not target or not target.strip():
                raise InvariantViolation("empty relation target")

    def to_dict(self) -> dict:
        return {
            "entity": self.entity.to_dict(),
            "entity_self": list(self.entity_self),
            "entity_relations": dict(self.entity_relations),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EntityRecord":
        return cls(
            entity=Entity.from_dict(data["entity"]),
            entity_self=list(data["entity_self"]),
            entity_relations=dict(data["entity_relations"]),
        )


@dataclass
class EntityGraph:
    root: str
    records: dict[str, EntityRecord]
    depth: int
    truncated: bool = False

    def validate(self) -> None:
        if self.depth < 0:
            raise InvariantViolation("depth must be non-negative")
        if self.root not in self.records:
            raise InvariantViolation(f"root {self.root!r} missing from records")
        for name, record in self.records.items():
            record.validate()
            if name in record.entity_relations:
                raise InvariantViolation(f"self-loop relation on {name!r}")

    def frontier(self) -> list[str]:
        """Relation targets that were never expanded into records."""
        seen = set(self.records)
        out: list[str] = []
        for record in self.records.values():
            for target in record.entity_relations:
                if target not in seen:
                    seen.add(target)
                    out.append(target)
        return out

    def graph_id(self) -> str:
        return content_id(
            "graph",
            self.root,
            self.depth,
            {name: rec.to_dict() for name, rec in sorted(self.records.items())},
        )

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "records": {name: rec.to_dict() for name, rec in self.records.items()},
            "depth": self.depth,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EntityGraph":
        return cls(
            root=data["root"],
            records={name: EntityRecord.from_dict(rec) for name, rec in data["records"].items()},
            depth=int(data["depth"]),
            truncated=bool(data.get("truncated", False)),
        )


@dataclass
class QAPair:
    question: str
    answer: str
    language: str
    provenance: dict
    pruned: bool = False

    def task_id(self) -> str:
        return content_id("task", self.question, self.answer, self.provenance.get("graph_id"))

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer,
            "language": self.language,
            "provenance": dict(self.provenance),
            "pruned": self.pruned,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QAPair":
        return cls(
            question=data["question"],
            answer=data["answer"],
            language=data["language"],
            provenance=dict(data["provenance"]),
            pruned=bool(data["pruned"]),
        )


@dataclass
class Segment:
    kind: str
    text: str = ""
    tool_call: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.kind not in SEGMENT_KINDS:
            raise InvariantViolation(f"unknown segment kind {self.kind!r}")
        if self.kind == SEG_TOOL_CALL and self.tool_call is None:
            raise InvariantViolation("tool_call segment without payload")
        if self.kind != SEG_TOOL_CALL and self.tool_call is not None:
            raise InvariantViolation(f"{self.kind} segment must not carry a tool_call payload")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "text": self.text}
        if self.tool_call is not None:
            out["tool_call"] = self.tool_call
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Segment":
        return cls(kind=data["kind"], text=data.get("text", ""), tool_call=data.get("tool_call"))


@dataclass
class Message:
    role: str
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise InvariantViolation(f"unknown role {self.role!r}")

    def tool_calls(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == SEG_TOOL_CALL]

    def answer_segment(self) -> Optional[Segment]:
        for seg in self.segments:
            if seg.kind == SEG_ANSWER:
                return seg
        return None

    def to_dict(self) -> dict:
        return {"role": self.role, "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, data: dict) -> "Message":
        return cls(role=data["role"], segments=[Segment.from_dict(s) for s in data["segments"]])


@dataclass
class Trajectory:
    id: str
    query: str
    messages: list[Message]
    final_answer: Optional[str]
    tool_call_count: int
    status: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "query": self.query,
            "messages": [m.to_dict() for m in self.messages],
            "final_answer": self.final_answer,
            "tool_call_count": self.tool_call_count,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trajectory":
        return cls(
            id=data["id"],
            query=data["query"],
            messages=[Message.from_dict(m) for m in data["messages"]],
            final_answer=data.get("final_answer"),
            tool_call_count=int(data["tool_call_count"]),
            status=data["status"],
        )


@dataclass
class CollectedTrajectory:
    """A trajectory tagged with the task and rollout that produced it."""

    task_id: str
    rollout_index: int
    trajectory: Trajectory

    def to_dict(self) -> dict:
        out = self.trajectory.to_dict()
        out["task_id"] = self.task_id
        out["rollout_index"] = self.rollout_index
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CollectedTrajectory":
        body = {k: v for k, v in data.items() if k not in ("task_id", "rollout_index")}
        return cls(
            task_id=data["task_id"],
            rollout_index=int(data["rollout_index"]),
            trajectory=Trajectory.from_dict(body),
        )


@dataclass
class ScoreCard:
    trajectory_id: str
    dimensions: dict[str, float]
    aggregate: float
    task_id: str = ""

    @classmethod
    def build(cls, trajectory_id: str, dimensions: dict[str, float], task_id: str = "") -> "ScoreCard":
        missing = [d for d in SCORE_DIMENSIONS if d not in dimensions]
        if missing:
            raise InvariantViolation(f"score card missing dimensions {missing}")
        for name, value in dimensions.items():
            if not 0.0 <= value <= 10.0:
                raise InvariantViolation(f"dimension {name}={value} outside [0, 10]")
        aggregate = sum(dimensions[d] for d in SCORE_DIMENSIONS) / len(SCORE_DIMENSIONS)
        return cls(trajectory_id=trajectory_id, dimensions=dict(dimensions), aggregate=aggregate, task_id=task_id)

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "task_id": self.task_id,
            "dimensions": dict(self.dimensions),
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreCard":
        card = cls.build(
            trajectory_id=data["trajectory_id"],
            dimensions={k: float(v) for k, v in data["dimensions"].items()},
            task_id=data.get("task_id", ""),
        )
        if abs(card.aggregate - float(data["aggregate"])) > 1e-9:
            raise InvariantViolation("stored aggregate is not the mean of the dimensions")
        return card


@dataclass
class PreferencePair:
    task_id: str
    chosen_id: str
    rejected_id: str
    chosen_score: float
    rejected_score: float

    def __post_init__(self) -> None:
        if self.chosen_score <= self.rejected_score:
            raise InvariantViolation("chosen score must be strictly higher than rejected")
        if self.chosen_id == self.rejected_id:
            raise InvariantViolation("chosen and rejected must be distinct trajectories")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "chosen_id": self.chosen_id,
            "rejected_id": self.rejected_id,
            "chosen_score": self.chosen_score,
            "rejected_score": self.rejected_score,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreferencePair":
        return cls(
            task_id=data["task_id"],
            chosen_id=data["chosen_id"],
            rejected_id=data["rejected_id"],
            chosen_score=float(data["chosen_score"]),
            rejected_score=float(data["rejected_score"]),
        )


@dataclass
class FilterVerdict:
    trajectory_id: str
    passed: bool
    failed_stage: Optional[str] = None
    details: str = ""

    def __post_init__(self) -> None:
        if self.passed and self.failed_stage is not None:
            raise InvariantViolation("passing verdict must not name a failed stage")
        if not self.passed and self.failed_stage is None:
            raise InvariantViolation("failing verdict must name the failed stage")

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "passed": self.passed,
            "failed_stage": self.failed_stage,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilterVerdict":
        return cls(
            trajectory_id=data["trajectory_id"],
            passed=bool(data["passed"]),
            failed_stage=data.get("failed_stage"),
            details=data.get("details", ""),
        )
