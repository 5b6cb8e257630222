"""Fuse the outputs of several QA systems with one more model call.

Each contributing system hands over its final answer and the documents it
retrieved. Generation mode renders everything into a single prompt and asks
the ensemble model to produce a fresh answer; selection mode lists only the
candidate answers and asks for the index of the best one. Both reuse the
same output contract as the subsystems: reasoning inside <think></think>,
the final answer inside <answer>\\boxed{...}</answer>.

A third family of operations ensembles rerankers: each reranker orders a
shared candidate pool, orders are repaired by ``postcheck_ranking``, and the
top slices of every repaired order are fused into one reading-comprehension
call over documents only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING

from . import prompts
from .errors import (
    BackendError,
    EmptyOutput,
    EmptyTraces,
    IndexOutOfRange,
    TransportError,
    UnparsableSelection,
)
from .gateway import user_request

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .corpus import Document
    from .pipelines import Question, SystemTrace

GENERATION = "generation"
SELECTION = "selection"

_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class EnsembleOutput:
    mode: str
    reasoning: str
    final_answer: str
    raw_text: str
    selected_index: int | None = None
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "reasoning": self.reasoning,
            "final_answer": self.final_answer,
            "raw_text": self.raw_text,
            "selected_index": self.selected_index,
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EnsembleOutput":
        return cls(
            mode=obj["mode"],
            reasoning=obj["reasoning"],
            final_answer=obj["final_answer"],
            raw_text=obj["raw_text"],
            selected_index=obj.get("selected_index"),
            failed=obj.get("failed", False),
            error=obj.get("error"),
        )


@dataclass(frozen=True)
class Ranking:
    doc_ids: tuple[int, ...]
    pool_size: int


def _boxed_content(text: str) -> str | None:
    """Brace-balanced content of the first \\boxed{...} in ``text``."""
    marker = "\\boxed{"
    start = text.find(marker)
    if start == -1:
        return None
    depth = 1
    pos = start + len(marker)
    out = []
    while pos < len(text) and depth > 0:
        ch = text[pos]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                break
        out.append(ch)
        pos += 1
    return "".join(out)


def _tag_content(text: str, tag: str) -> str | None:
    """Content of the innermost <tag>...</tag> pair, or None."""
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    start = text.rfind(open_tag)
    if start == -1:
        return None
    end = text.find(close_tag, start + len(open_tag))
    if end == -1:
        return None
    return text[start + len(open_tag) : end]


def parse_answer(raw: str) -> tuple[str, str]:
    """Split a model response into (reasoning, answer).

    Reasoning is the innermost <think></think> content, empty when absent.
    The answer is taken from the first applicable source: \\boxed{} inside
    the <answer></answer> tags, \\boxed{} anywhere, the <answer></answer>
    content itself, and finally the last non-empty line. Candidates that
    strip to nothing are skipped. Raises :class:`EmptyOutput` on
    whitespace-only input.
    """
    if not raw.strip():
        raise EmptyOutput("model returned a whitespace-only response")
    think = _tag_content(raw, "think")
    reasoning = think.strip() if think is not None else ""

    answer_tag = _tag_content(raw, "answer")
    candidates = []
    if answer_tag is not None:
        candidates.append(_boxed_content(answer_tag))
    candidates.append(_boxed_content(raw))
    candidates.append(answer_tag)
    for candidate in candidates:
        if candidate is not None and candidate.strip():
            return reasoning, candidate.strip()
    last_line = [line for line in raw.splitlines() if line.strip()][-1]
    return reasoning, last_line.strip()


def _system_information(trace: "SystemTrace", doc_char_budget: int) -> str:
    lines = [f"Answer: {trace.answer}", "Documents:"]
    if trace.documents:
        for doc in trace.documents:
            lines.append(prompts.doc_line(doc.title, doc.text, doc_char_budget))
    else:
        lines.append("(none)")
    return "\n".join(lines)


def assemble_ensemble_prompt(
    question: "Question",
    traces,
    doc_char_budget: int = prompts.DOC_CHAR_BUDGET,
) -> str:
    """Render the generation-mode fusion prompt over every system's answer and documents."""
    traces = list(traces)
    if not traces:
        raise EmptyTraces("ensemble prompt needs at least one system trace")
    parts = [prompts.FUSION_HEADER.format(num=len(traces))]
    for i, trace in enumerate(traces, start=1):
        parts.append(f"System {i}: {_system_information(trace, doc_char_budget)}")
    body = "\n".join(parts)
    return (
        f"{body}\n\nQuestion: {question.text}\n\n{prompts.ANSWER_FORMAT_INSTRUCTIONS}"
    )


def assemble_selection_prompt(question: "Question", traces) -> str:
    """Render the selection-mode prompt: candidate answers only, no documents."""
    traces = list(traces)
    if not traces:
        raise EmptyTraces("selection prompt needs at least one system trace")
    parts = [prompts.SELECTION_HEADER.format(num=len(traces))]
    for i, trace in enumerate(traces, start=1):
        parts.append(f"Candidate {i}: {trace.answer}")
    body = "\n".join(parts)
    return f"{body}\n\nQuestion: {question.text}\n\n{prompts.SELECTION_INSTRUCTIONS}"


def _failed_output(mode: str, exc: Exception) -> EnsembleOutput:
    return EnsembleOutput(
        mode=mode,
        reasoning="",
        final_answer="",
        raw_text="",
        failed=True,
        error=f"{type(exc).__name__}: {exc}",
    )


def ensemble_generate(
    question: "Question",
    traces,
    backend,
    doc_char_budget: int = prompts.DOC_CHAR_BUDGET,
) -> EnsembleOutput:
    prompt = assemble_ensemble_prompt(question, traces, doc_char_budget)
    try:
        response = backend.chat(user_request(getattr(backend, "model_id", "ensemble"), prompt))
        reasoning, answer = parse_answer(response.text)
    except (TransportError, BackendError, EmptyOutput) as exc:
        return _failed_output(GENERATION, exc)
    return EnsembleOutput(
        mode=GENERATION, reasoning=reasoning, final_answer=answer, raw_text=response.text
    )


def ensemble_select(question: "Question", traces, backend) -> EnsembleOutput:
    traces = list(traces)
    prompt = assemble_selection_prompt(question, traces)
    try:
        response = backend.chat(user_request(getattr(backend, "model_id", "ensemble"), prompt))
        reasoning, answer = parse_answer(response.text)
    except (TransportError, BackendError, EmptyOutput) as exc:
        return _failed_output(SELECTION, exc)
    try:
        index = int(answer.strip())
    except ValueError:
        raise UnparsableSelection(f"selection answer is not an integer: {answer!r}")
    if not 1 <= index <= len(traces):
        raise IndexOutOfRange(f"selected index {index} outside 1..{len(traces)}")
    return EnsembleOutput(
        mode=SELECTION,
        reasoning=reasoning,
        final_answer=traces[index - 1].answer,
        raw_text=response.text,
        selected_index=index,
    )


def assemble_rerank_prompt(
    question: "Question",
    docs,
    doc_char_budget: int = prompts.DOC_CHAR_BUDGET,
) -> str:
    docs = list(docs)
    example = ",".join(str(i) for i in range(1, len(docs) + 1))
    parts = [prompts.RERANK_POOL_HEADER.format(num=len(docs))]
    for i, doc in enumerate(docs, start=1):
        parts.append(f"Document {i}: {prompts.doc_text(doc.title, doc.text, doc_char_budget)}")
    body = "\n".join(parts)
    instructions = prompts.RERANK_POOL_INSTRUCTIONS.format(num=len(docs), example=example)
    return f"{body}\n\nQuestion: {question.text}\n\n{instructions}"


def rerank_documents(question: "Question", docs, backend) -> Ranking:
    """Ask the model for a relevance order over ``docs``; the result is raw.

    Integers are pulled out of the response permissively (anything
    non-numeric is skipped), so the returned ranking may contain duplicates
    or out-of-range ids. Run :func:`postcheck_ranking` before using it.
    """
    docs = list(docs)
    if not docs:
        raise ValueError("rerank_documents needs at least one document")
    prompt = assemble_rerank_prompt(question, docs)
    response = backend.chat(user_request(getattr(backend, "model_id", "reranker"), prompt))
    ids = tuple(int(tok) for tok in _INT_RE.findall(response.text))
    return Ranking(doc_ids=ids, pool_size=len(docs))


def postcheck_ranking(raw, pool_size: int | None = None) -> Ranking:
    """Repair a model-produced ranking into a permutation of 1..pool_size.

    ``raw`` is an integer sequence (a :class:`Ranking` is also accepted, in
    which case its own pool size is the default). Duplicates keep their first
    occurrence, ids outside the pool are dropped, and missing ids are appended
    in ascending order. The result is idempotent under re-application.
    """
    if isinstance(raw, Ranking):
        if pool_size is None:
            pool_size = raw.pool_size
        raw = raw.doc_ids
    if pool_size is None:
        raise ValueError("pool_size is required for a plain id list")
    size = pool_size
    if size < 1:
        raise ValueError("pool_size must be >= 1")
    seen: set[int] = set()
    repaired: list[int] = []
    for doc_id in raw:
        if 1 <= doc_id <= size and doc_id not in seen:
            seen.add(doc_id)
            repaired.append(doc_id)
    for doc_id in range(1, size + 1):
        if doc_id not in seen:
            repaired.append(doc_id)
    return Ranking(doc_ids=tuple(repaired), pool_size=size)


def assemble_rerank_fusion_prompt(
    question: "Question",
    rankings,
    docs,
    top_k: int = 5,
    doc_char_budget: int = prompts.DOC_CHAR_BUDGET,
) -> str:
    """Render the reranker-fusion prompt: the top slice of each repaired order.

    Documents only; systems' intermediate answers never appear here. Set
    numbering follows the order the rankings are given in.
    """
    docs = list(docs)
    rankings = list(rankings)
    if not rankings:
        raise EmptyTraces("rerank fusion needs at least one ranking")
    parts = [prompts.RERANK_FUSION_HEADER.format(num=len(rankings))]
    for i, ranking in enumerate(rankings, start=1):
        if ranking.pool_size != len(docs):
            raise ValueError(
                f"ranking {i} covers a pool of {ranking.pool_size}, got {len(docs)} documents"
            )
        parts.append(f"Set {i}:")
        for doc_id in ranking.doc_ids[:top_k]:
            doc = docs[doc_id - 1]
            parts.append(prompts.doc_line(doc.title, doc.text, doc_char_budget))
    body = "\n".join(parts)
    return (
        f"{body}\n\nQuestion: {question.text}\n\n{prompts.ANSWER_FORMAT_INSTRUCTIONS}"
    )


def ensemble_rerank(
    question: "Question",
    rankings,
    docs,
    backend,
    top_k: int = 5,
) -> EnsembleOutput:
    """Fuse several repaired rankings: answer from the union of their top slices."""
    repaired = [postcheck_ranking(r) for r in rankings]
    prompt = assemble_rerank_fusion_prompt(question, repaired, docs, top_k=top_k)
    try:
        response = backend.chat(user_request(getattr(backend, "model_id", "ensemble"), prompt))
        reasoning, answer = parse_answer(response.text)
    except (TransportError, BackendError, EmptyOutput) as exc:
        return _failed_output(GENERATION, exc)
    return EnsembleOutput(
        mode=GENERATION, reasoning=reasoning, final_answer=answer, raw_text=response.text
    )
