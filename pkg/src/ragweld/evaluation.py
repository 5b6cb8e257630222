"""Answer scoring: exact match, token F1 and ROUGE-L.

Normalization follows the established extractive-QA convention (the SQuAD
evaluation script): lowercase, strip punctuation, drop the articles a/an/the
as whole tokens, collapse whitespace. EM and F1 take the maximum over all
gold answers; ROUGE-L does the same so multi-gold questions are scored
uniformly across metrics.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field

from .errors import EmptyGolds

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(pred: str, golds: list[str]) -> int:
    if not golds:
        raise EmptyGolds("exact_match requires at least one gold answer")
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(g) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = Counter(pred_tokens) & Counter(gold_tokens)
    n_same = sum(overlap.values())
    if n_same == 0:
        return 0.0
    precision = n_same / len(pred_tokens)
    recall = n_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds: list[str]) -> float:
    if not golds:
        raise EmptyGolds("token_f1 requires at least one gold answer")
    pred_tokens = normalize_answer(pred).split()
    return max(_f1_single(pred_tokens, normalize_answer(g).split()) for g in golds)


def _lcs_len(a: list[str], b: list[str]) -> int:
    # Classic O(len(a)*len(b)) dynamic program over token sequences.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(pred: str, ref: str) -> float:
    """LCS-based F measure over normalized tokens; 0.0 when either side is empty."""
    pred_tokens = normalize_answer(pred).split()
    ref_tokens = normalize_answer(ref).split()
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_len(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class QuestionScore:
    em: int
    f1: float
    rouge_l: float
    missing: bool = False

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "rouge_l": self.rouge_l,
            "missing": self.missing,
        }


@dataclass(frozen=True)
class MetricsReport:
    dataset: str
    n: int
    em: float
    f1: float
    rouge_l: float
    per_question: dict[str, QuestionScore] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "n": self.n,
            "em": self.em,
            "f1": self.f1,
            "rouge_l": self.rouge_l,
            "per_question": {
                q_id: score.to_dict() for q_id, score in sorted(self.per_question.items())
            },
        }


def evaluate_run(outputs: dict[str, str], questions, dataset_name: str = "") -> MetricsReport:
    """Score predicted answers against a question set.

    ``outputs`` maps question ids to answer strings. Questions with no
    prediction score zero on every metric and are flagged ``missing``.
    """
    per_question: dict[str, QuestionScore] = {}
    for q in questions:
        if q.q_id not in outputs:
            per_question[q.q_id] = QuestionScore(em=0, f1=0.0, rouge_l=0.0, missing=True)
            continue
        pred = outputs[q.q_id]
        per_question[q.q_id] = QuestionScore(
            em=exact_match(pred, list(q.gold_answers)),
            f1=token_f1(pred, list(q.gold_answers)),
            rouge_l=max(rouge_l(pred, g) for g in q.gold_answers),
        )
    n = len(per_question)
    if n == 0:
        return MetricsReport(dataset=dataset_name, n=0, em=0.0, f1=0.0, rouge_l=0.0)
    return MetricsReport(
        dataset=dataset_name,
        n=n,
        em=sum(s.em for s in per_question.values()) / n,
        f1=sum(s.f1 for s in per_question.values()) / n,
        rouge_l=sum(s.rouge_l for s in per_question.values()) / n,
        per_question=per_question,
    )
