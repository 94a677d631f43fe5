"""Question generation from entity graphs: generate, prune clues, validate."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

from . import prompts
from .errors import EmptyGraph, InvariantViolation, MalformedQaResponse
from .providers.base import ChatMessage, ChatRequest
from .records import EntityGraph, QAPair, detect_language, normalize_name

log = logging.getLogger(__name__)

QUESTION_MIN_CHARS = 20
QUESTION_MAX_CHARS = 2000

REJECT_EMPTY = "EmptyField"
REJECT_TOO_SHORT = "TooShort"
REJECT_TOO_LONG = "TooLong"
REJECT_ANSWER_LEAK = "AnswerLeak"
REJECT_JUDGE = "JudgeRejected"


def _block(tag: str, text: str) -> Optional[str]:
    match = re.search(rf"<{tag}>(.*?)</{tag}>", text, flags=re.DOTALL)
    return match.group(1).strip() if match else None


def _ask(chat, prompt: str) -> str:
    response = chat.chat(ChatRequest(messages=[ChatMessage(role="user", content=prompt)]))
    return response.text


def generate_qa(chat, graph: EntityGraph) -> QAPair:
    """Render the QA prompt over the serialized graph and parse the reply."""
    if not graph.records:
        raise EmptyGraph("cannot generate a question from an empty graph")
    prompt = prompts.render_qa_prompt(prompts.serialize_graph_for_prompt(graph))
    reply = _ask(chat, prompt)
    question, answer = _block("question", reply), _block("answer", reply)
    if question is None or answer is None:
        # One repair attempt with an explicit format reminder.
        reply = _ask(
            chat,
            prompt + "\n\nYour previous reply was missing a required block. "
            "Reply again with <thinking>, <question>, and <answer> blocks.",
        )
        question, answer = _block("question", reply), _block("answer", reply)
        if question is None or answer is None:
            raise MalformedQaResponse("reply lacks <question> or <answer> after retry")
    return QAPair(
        question=question,
        answer=answer,
        language=detect_language(question),
        provenance={"seed_entity": graph.root, "graph_id": graph.graph_id(), "depth": graph.depth},
        pruned=False,
    )


def prune_clues(chat, qa: QAPair, graph: EntityGraph) -> QAPair:
    """One rewrite pass blurring precise identifiers; the answer is immutable."""
    if qa.pruned:
        raise InvariantViolation("pair was already pruned")
    reply = _ask(chat, prompts.render_prune_prompt(qa.question, qa.answer))
    question, answer = _block("question", reply), _block("answer", reply)
    if not question or answer != qa.answer:
        log.warning("prune rewrite altered the answer or emptied the question; keeping original")
        return qa
    return QAPair(
        question=question,
        answer=qa.answer,
        language=qa.language,
        provenance=dict(qa.provenance),
        pruned=True,
    )


@dataclass(frozen=True)
class QaVerdict:
    accepted: bool
    reason: Optional[str] = None


def validate_qa(qa: QAPair, chat=None) -> QaVerdict:
    """Deterministic sanity checks first, then an optional judge pass."""
    if qa.question.strip() and qa.language != detect_language(qa.question):
        # Warning-level: a mislabeled language tag does not reject the pair.
        log.warning("language tag %r disagrees with the question script", qa.language)
    if not qa.question.strip() or not qa.answer.strip():
        return QaVerdict(False, REJECT_EMPTY)
    if len(qa.question) < QUESTION_MIN_CHARS:
        return QaVerdict(False, REJECT_TOO_SHORT)
    if len(qa.question) > QUESTION_MAX_CHARS:
        return QaVerdict(False, REJECT_TOO_LONG)
    if normalize_name(qa.answer) in normalize_name(qa.question):
        return QaVerdict(False, REJECT_ANSWER_LEAK)
    if chat is not None:
        reply = _ask(chat, prompts.render_qa_validation_prompt(qa.question, qa.answer)).strip().upper()
        if "ACCEPT" not in reply:
            return QaVerdict(False, REJECT_JUDGE)
    return QaVerdict(True)


def run_stage2(
    suite,
    graphs: list[EntityGraph],
    out_path,
    skip_prune: bool = False,
    skip_validate: bool = False,
    workers: int = 1,
) -> list[QAPair]:
    """Generate, prune, and validate a pair per graph; accepted pairs persist."""
    from concurrent.futures import ThreadPoolExecutor

    from .errors import DeepForgeError, ProviderUnavailable
    from .resume import StageWriter

    writer = StageWriter(out_path, key_fn=lambda row: row["provenance"]["graph_id"])
    done = writer.done_keys()
    todo = [g for g in graphs if g.graph_id() not in done]

    def forge_one(graph: EntityGraph) -> None:
        try:
            qa = generate_qa(suite.chat, graph)
            if not skip_prune:
                qa = prune_clues(suite.chat, qa, graph)
            if not skip_validate:
                verdict = validate_qa(qa, suite.chat)
                if not verdict.accepted:
                    log.warning("dropping pair for graph %s: %s", graph.root, verdict.reason)
                    return
        except ProviderUnavailable:
            raise  # an outage is not a per-item fault
        except DeepForgeError as exc:
            log.warning("question generation failed for %r: %s", graph.root, exc)
            return
        writer.append(qa.to_dict())

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        list(pool.map(forge_one, todo))
    writer.finalize()
    return [QAPair.from_dict(row) for row in writer.rows()]
