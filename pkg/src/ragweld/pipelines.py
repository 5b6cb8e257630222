"""Reference retrieval-augmented QA pipelines.

Five archetypes cover the design space the ensemble draws from:

* ``standard``   retrieve once, answer once.
* ``branching``  answer once per retrieved document, then vote; votes are
                 weighted by the softmax of retrieval scores and summed over
                 identical normalized answer strings.
* ``iterative``  fixed number of retrieve/generate rounds, each round's
                 query being the question plus the previous answer.
* ``loop``       draft with token logprobs; while the weakest token is below
                 a confidence threshold, re-retrieve with the draft as the
                 query and regenerate (at most three regenerations).
* ``agentic``    the model drives retrieval itself with <search></search>
                 tags and finishes with <answer></answer>.

Every run produces a :class:`SystemTrace` carrying the final answer, the
resolved evidence documents and a full (prompt, response) turn log. Backend
and retrieval failures do not raise: the trace comes back flagged failed so
multi-system experiments keep going.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, get_document
from .ensemble import parse_answer
from .errors import (
    BackendError,
    ConfigError,
    DimensionMismatch,
    EmptyCorpus,
    EmptyOutput,
    MalformedLine,
    MissingFile,
    NoLogprobsAvailable,
    RetrievalError,
    TransportError,
)
from .evaluation import normalize_answer
from .gateway import Message, ChatRequest, perplexity, user_request
from . import prompts

TASK_TYPES = ("single_hop", "multi_hop", "multiple_choice", "summarization")

STANDARD = "standard"
BRANCHING = "branching"
ITERATIVE = "iterative"
LOOP = "loop"
AGENTIC = "agentic"

MAX_REGENERATIONS = 3


@dataclass(frozen=True)
class Question:
    q_id: str
    text: str
    gold_answers: tuple[str, ...]
    task_type: str = "single_hop"
    choices: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.q_id:
            raise ValueError("q_id must be non-empty")
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"unknown task_type {self.task_type!r}")
        if not self.gold_answers:
            raise ValueError(f"question {self.q_id!r} has no gold answers")
        if self.task_type == "multiple_choice" and not self.choices:
            raise ValueError(f"multiple_choice question {self.q_id!r} needs choices")


def load_questions(path: str | Path) -> list[Question]:
    """Read a JSONL question file: id, question, golden_answers, task_type, choices."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    questions: list[Question] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from None
            try:
                golds = obj["golden_answers"]
                if not isinstance(golds, list):
                    raise ValueError("'golden_answers' must be a list")
                choices = obj.get("choices")
                questions.append(
                    Question(
                        q_id=str(obj["id"]),
                        text=str(obj["question"]),
                        gold_answers=tuple(str(g) for g in golds),
                        task_type=obj.get("task_type", "single_hop"),
                        choices=tuple(str(c) for c in choices) if choices else None,
                    )
                )
            except (KeyError, ValueError) as exc:
                raise MalformedLine(line_no, str(exc)) from None
    return questions


@dataclass(frozen=True)
class EvidenceDoc:
    doc_id: str
    title: str
    text: str
    score: float
    rank: int
    retriever_id: str

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "text": self.text,
            "score": self.score,
            "rank": self.rank,
            "retriever_id": self.retriever_id,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvidenceDoc":
        return cls(**obj)


@dataclass(frozen=True)
class SystemTrace:
    system_id: str
    pipeline_type: str
    q_id: str
    answer: str
    documents: tuple[EvidenceDoc, ...] = ()
    perplexity: float | None = None
    turn_log: tuple[tuple[str, str], ...] = ()
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "pipeline_type": self.pipeline_type,
            "q_id": self.q_id,
            "answer": self.answer,
            "documents": [d.to_dict() for d in self.documents],
            "perplexity": self.perplexity,
            "turn_log": [[p, r] for p, r in self.turn_log],
            "failed": self.failed,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SystemTrace":
        return cls(
            system_id=obj["system_id"],
            pipeline_type=obj["pipeline_type"],
            q_id=obj["q_id"],
            answer=obj["answer"],
            documents=tuple(EvidenceDoc.from_dict(d) for d in obj["documents"]),
            perplexity=obj.get("perplexity"),
            turn_log=tuple((p, r) for p, r in obj.get("turn_log", [])),
            failed=obj.get("failed", False),
            error=obj.get("error"),
        )


@dataclass(frozen=True)
class PipelineConfig:
    backend_id: str
    retriever_id: str
    k: int = 5
    iterations: int = 2
    confidence_threshold: float = 0.8
    max_turns: int = 4
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.confidence_threshold <= 1:
            raise ValueError("confidence_threshold must be in (0, 1]")
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")


@dataclass(frozen=True)
class Runtime:
    """Resolved execution context shared by every pipeline call."""

    corpus: Corpus
    retrievers: dict[str, object] = field(default_factory=dict)
    backends: dict[str, object] = field(default_factory=dict)

    def retriever(self, retriever_id: str):
        try:
            return self.retrievers[retriever_id]
        except KeyError:
            raise ConfigError("retriever_id", f"unknown retriever {retriever_id!r}") from None

    def backend(self, backend_id: str):
        try:
            return self.backends[backend_id]
        except KeyError:
            raise ConfigError("backend_id", f"unknown backend {backend_id!r}") from None


def qa_prompt(question: Question, docs, doc_char_budget: int = prompts.DOC_CHAR_BUDGET) -> str:
    """Single-call reading prompt shared by standard, branching, iterative and loop."""
    docs = list(docs)
    if docs:
        doc_block = "\n".join(prompts.doc_line(d.title, d.text, doc_char_budget) for d in docs)
    else:
        doc_block = prompts.QA_NO_DOCUMENTS_NOTICE
    question_block = f"Question: {question.text}"
    if question.choices:
        numbered = "\n".join(f"{i}. {c}" for i, c in enumerate(question.choices, start=1))
        question_block += f"\nChoices:\n{numbered}"
    return (
        f"{prompts.QA_HEADER}\n\nDocuments:\n{doc_block}\n\n"
        f"{question_block}\n\n{prompts.QA_FOOTER}"
    )


def _resolve_hits(corpus: Corpus, hits) -> list[EvidenceDoc]:
    resolved = []
    for hit in hits:
        doc = get_document(corpus, hit.doc_id)
        resolved.append(
            EvidenceDoc(
                doc_id=doc.doc_id,
                title=doc.title,
                text=doc.text,
                score=hit.score,
                rank=hit.rank,
                retriever_id=hit.retriever_id,
            )
        )
    return resolved


def _merge_docs(existing: list[EvidenceDoc], new: list[EvidenceDoc]) -> list[EvidenceDoc]:
    """Union by doc id, keeping first-appearance order and the best score."""
    index = {d.doc_id: i for i, d in enumerate(existing)}
    merged = list(existing)
    for doc in new:
        if doc.doc_id in index:
            pos = index[doc.doc_id]
            if doc.score > merged[pos].score:
                merged[pos] = doc
        else:
            index[doc.doc_id] = len(merged)
            merged.append(doc)
    return merged


_PIPELINE_FAILURES = (
    TransportError,
    BackendError,
    RetrievalError,
    EmptyCorpus,
    DimensionMismatch,
    EmptyOutput,
)


def _failed_trace(system_id, pipeline_type, q, docs, turn_log, exc) -> SystemTrace:
    return SystemTrace(
        system_id=system_id,
        pipeline_type=pipeline_type,
        q_id=q.q_id,
        answer="",
        documents=tuple(docs),
        turn_log=tuple(turn_log),
        failed=True,
        error=f"{type(exc).__name__}: {exc}",
    )


def _retrieve(runtime: Runtime, cfg: PipelineConfig, query: str) -> list[EvidenceDoc]:
    retriever = runtime.retriever(cfg.retriever_id)
    hits = retriever.search(query, cfg.k)
    return _resolve_hits(runtime.corpus, hits)


def _chat(runtime: Runtime, cfg: PipelineConfig, prompt: str, want_logprobs: bool = True):
    backend = runtime.backend(cfg.backend_id)
    request = user_request(
        getattr(backend, "model_id", cfg.backend_id),
        prompt,
        temperature=cfg.temperature,
        max_tokens=cfg.max_tokens,
        want_logprobs=want_logprobs,
    )
    return backend.chat(request)


def _maybe_perplexity(response) -> float | None:
    if response.token_logprobs is None:
        return None
    return perplexity(response.token_logprobs)


def run_standard(q: Question, cfg: PipelineConfig, runtime: Runtime, *, system_id: str = STANDARD) -> SystemTrace:
    """Retrieve top-k once, answer in one chat call."""
    turn_log: list[tuple[str, str]] = []
    docs: list[EvidenceDoc] = []
    try:
        docs = _retrieve(runtime, cfg, q.text)
        prompt = qa_prompt(q, docs)
        response = _chat(runtime, cfg, prompt)
        turn_log.append((prompt, response.text))
        _, answer = parse_answer(response.text)
    except _PIPELINE_FAILURES as exc:
        return _failed_trace(system_id, STANDARD, q, docs, turn_log, exc)
    return SystemTrace(
        system_id=system_id,
        pipeline_type=STANDARD,
        q_id=q.q_id,
        answer=answer,
        documents=tuple(docs),
        perplexity=_maybe_perplexity(response),
        turn_log=tuple(turn_log),
    )


def _softmax(scores: list[float]) -> list[float]:
    top = max(scores)
    exps = [math.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def run_branching(q: Question, cfg: PipelineConfig, runtime: Runtime, *, system_id: str = BRANCHING) -> SystemTrace:
    """One answer per retrieved document, fused by weighted voting.

    Branch weights are the softmax of retrieval scores; branches voting for
    the same normalized answer string pool their weight, and weight ties go
    to the answer backed by the earliest retrieval rank.
    """
    turn_log: list[tuple[str, str]] = []
    docs: list[EvidenceDoc] = []
    try:
        docs = _retrieve(runtime, cfg, q.text)
    except (RetrievalError, EmptyCorpus, DimensionMismatch) as exc:
        return _failed_trace(system_id, BRANCHING, q, docs, turn_log, exc)
    if not docs:
        return _failed_trace(
            system_id, BRANCHING, q, docs, turn_log, RetrievalError("no documents retrieved")
        )
    weights = _softmax([d.score for d in docs])
    branches = []  # (answer, weight, rank, response)
    for doc, weight in zip(docs, weights):
        prompt = qa_prompt(q, [doc])
        try:
            response = _chat(runtime, cfg, prompt)
            turn_log.append((prompt, response.text))
            _, answer = parse_answer(response.text)
        except _PIPELINE_FAILURES as exc:
            turn_log.append((prompt, f"ERROR {type(exc).__name__}: {exc}"))
            continue
        branches.append((answer, weight, doc.rank, response))
    if not branches:
        return _failed_trace(
            system_id, BRANCHING, q, docs, turn_log, RetrievalError("every branch failed")
        )
    tally: dict[str, list] = {}
    for answer, weight, rank, response in branches:
        key = normalize_answer(answer)
        entry = tally.setdefault(key, [0.0, rank, answer, response])
        entry[0] += weight
        if rank < entry[1]:
            entry[1], entry[2], entry[3] = rank, answer, response
    best = max(tally.values(), key=lambda e: (e[0], -e[1]))
    return SystemTrace(
        system_id=system_id,
        pipeline_type=BRANCHING,
        q_id=q.q_id,
        answer=best[2],
        documents=tuple(docs),
        perplexity=_maybe_perplexity(best[3]),
        turn_log=tuple(turn_log),
    )


def run_iterative(q: Question, cfg: PipelineConfig, runtime: Runtime, *, system_id: str = ITERATIVE) -> SystemTrace:
    """Fixed-depth retrieve/generate rounds, feeding each answer into the next query."""
    if cfg.iterations < 1:
        raise ValueError("iterations must be >= 1")
    turn_log: list[tuple[str, str]] = []
    all_docs: list[EvidenceDoc] = []
    answer = ""
    query = q.text
    try:
        for _ in range(cfg.iterations):
            round_docs = _retrieve(runtime, cfg, query)
            all_docs = _merge_docs(all_docs, round_docs)
            prompt = qa_prompt(q, round_docs)
            response = _chat(runtime, cfg, prompt)
            turn_log.append((prompt, response.text))
            _, answer = parse_answer(response.text)
            query = f"{q.text} {answer}"
    except _PIPELINE_FAILURES as exc:
        return _failed_trace(system_id, ITERATIVE, q, all_docs, turn_log, exc)
    return SystemTrace(
        system_id=system_id,
        pipeline_type=ITERATIVE,
        q_id=q.q_id,
        answer=answer,
        documents=tuple(all_docs),
        perplexity=_maybe_perplexity(response),
        turn_log=tuple(turn_log),
    )


def run_loop(q: Question, cfg: PipelineConfig, runtime: Runtime, *, system_id: str = LOOP) -> SystemTrace:
    """Draft, then re-retrieve and regenerate while token confidence is low.

    Confidence is the minimum token probability of the draft. Requires a
    backend that reports logprobs whenever the threshold is below 1;
    otherwise :class:`NoLogprobsAvailable` is raised.
    """
    turn_log: list[tuple[str, str]] = []
    docs: list[EvidenceDoc] = []
    try:
        docs = _merge_docs([], _retrieve(runtime, cfg, q.text))
        regenerations = 0
        while True:
            prompt = qa_prompt(q, docs)
            response = _chat(runtime, cfg, prompt, want_logprobs=True)
            turn_log.append((prompt, response.text))
            if response.token_logprobs is None:
                if cfg.confidence_threshold < 1.0:
                    raise NoLogprobsAvailable(
                        f"backend {cfg.backend_id!r} returned no logprobs"
                    )
                break
            min_prob = math.exp(min(response.token_logprobs))
            if min_prob >= cfg.confidence_threshold or regenerations >= MAX_REGENERATIONS:
                break
            regenerations += 1
            docs = _merge_docs(docs, _retrieve(runtime, cfg, response.text))
    except _PIPELINE_FAILURES as exc:
        return _failed_trace(system_id, LOOP, q, docs, turn_log, exc)
    return SystemTrace(
        system_id=system_id,
        pipeline_type=LOOP,
        q_id=q.q_id,
        answer=response.text.strip(),
        documents=tuple(docs),
        perplexity=_maybe_perplexity(response),
        turn_log=tuple(turn_log),
    )


def _search_query(text: str) -> str | None:
    """Query inside a well-formed <search></search> tag, else None."""
    start = text.find("<search>")
    if start == -1:
        return None
    end = text.find("</search>", start + len("<search>"))
    if end == -1:
        return None
    return text[start + len("<search>") : end].strip()


def _has_answer_tag(text: str) -> bool:
    start = text.find("<answer>")
    return start != -1 and text.find("</answer>", start + len("<answer>")) != -1


def _render_conversation(messages) -> str:
    return "\n\n".join(f"[{m.role}]\n{m.content}" for m in messages)


def run_agentic(q: Question, cfg: PipelineConfig, runtime: Runtime, *, system_id: str = AGENTIC) -> SystemTrace:
    """Let the model interleave <search> requests with reasoning turns.

    The loop ends when a turn carries no well-formed search request (the
    turn is then treated as the final answer) or when ``max_turns`` search
    turns have been spent, after which one forced answer turn runs. A
    ``<search>`` tag that never closes also terminates the loop: the turn
    is read as a final answer rather than a retrieval request.
    """
    backend = runtime.backend(cfg.backend_id)
    messages: list[Message] = [
        Message("system", prompts.AGENT_SYSTEM_PROMPT),
        Message("user", q.text),
    ]
    turn_log: list[tuple[str, str]] = []
    docs: list[EvidenceDoc] = []

    def call():
        request = ChatRequest(
            model_id=getattr(backend, "model_id", cfg.backend_id),
            messages=tuple(messages),
            temperature=cfg.temperature,
            max_tokens=cfg.max_tokens,
            want_logprobs=True,
        )
        response = backend.chat(request)
        turn_log.append((_render_conversation(messages), response.text))
        return response

    try:
        final_response = None
        for _ in range(cfg.max_turns):
            response = call()
            query = _search_query(response.text)
            # An explicit answer outranks a search request; a turn with no
            # well-formed search tag (including an unclosed one) is final.
            if _has_answer_tag(response.text) or query is None:
                final_response = response
                break
            round_docs = _retrieve(runtime, cfg, query)
            docs = _merge_docs(docs, round_docs)
            if round_docs:
                info = "\n".join(prompts.doc_line(d.title, d.text) for d in round_docs)
            else:
                info = prompts.NO_SEARCH_RESULTS_NOTICE
            messages.append(Message("assistant", response.text))
            messages.append(Message("user", f"<information>\n{info}\n</information>"))
        if final_response is None:
            messages.append(Message("user", prompts.AGENT_FORCED_ANSWER))
            final_response = call()
        _, answer = parse_answer(final_response.text)
    except _PIPELINE_FAILURES as exc:
        return _failed_trace(system_id, AGENTIC, q, docs, turn_log, exc)
    return SystemTrace(
        system_id=system_id,
        pipeline_type=AGENTIC,
        q_id=q.q_id,
        answer=answer,
        documents=tuple(docs),
        perplexity=_maybe_perplexity(final_response),
        turn_log=tuple(turn_log),
    )


PIPELINES = {
    STANDARD: run_standard,
    BRANCHING: run_branching,
    ITERATIVE: run_iterative,
    LOOP: run_loop,
    AGENTIC: run_agentic,
}
