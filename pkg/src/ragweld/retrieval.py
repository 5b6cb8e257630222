"""Sparse and dense retrieval over an in-memory corpus.

The BM25 variant uses a strictly positive idf, ``ln(1 + (N - df + 0.5) /
(df + 0.5))``, so matching any query term always contributes a positive
score. Documents scoring zero are excluded from results: returning fewer
than k hits is preferred over padding prompts with arbitrary evidence.
Dense search is exhaustive cosine similarity and does not filter zeros,
since a zero cosine is a legitimate similarity value.

Ties are always broken by ascending doc id so rankings are reproducible.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, tokenize
from .errors import DimensionMismatch, EmptyCorpus


@dataclass(frozen=True)
class RetrievalHit:
    doc_id: str
    score: float
    rank: int
    retriever_id: str


@dataclass(frozen=True)
class Bm25Index:
    doc_ids: tuple[str, ...]
    doc_freq: dict[str, int]
    term_freq: dict[tuple[str, str], int]
    doc_len: dict[str, int]
    n_docs: int
    avgdl: float
    k1: float = 1.5
    b: float = 0.75


def build_bm25_index(corpus: Corpus, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    if corpus.doc_count == 0:
        raise EmptyCorpus("cannot build a BM25 index over an empty corpus")
    doc_freq: dict[str, int] = {}
    term_freq: dict[tuple[str, str], int] = {}
    doc_len: dict[str, int] = {}
    for doc in corpus:
        tokens = tokenize(doc.text)
        doc_len[doc.doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            doc_freq[term] = doc_freq.get(term, 0) + 1
            term_freq[(term, doc.doc_id)] = tf
    avgdl = sum(doc_len.values()) / len(doc_len)
    return Bm25Index(
        doc_ids=tuple(d.doc_id for d in corpus),
        doc_freq=doc_freq,
        term_freq=term_freq,
        doc_len=doc_len,
        n_docs=corpus.doc_count,
        avgdl=avgdl,
        k1=k1,
        b=b,
    )


def bm25_idf(index: Bm25Index, term: str) -> float:
    df = index.doc_freq.get(term, 0)
    if df == 0:
        return 0.0
    return math.log(1 + (index.n_docs - df + 0.5) / (df + 0.5))


def bm25_score(index: Bm25Index, query_terms: list[str], doc_id: str) -> float:
    dl = index.doc_len[doc_id]
    norm = index.k1 * (1 - index.b + index.b * dl / index.avgdl)
    score = 0.0
    for term in query_terms:
        tf = index.term_freq.get((term, doc_id), 0)
        if tf == 0:
            continue
        score += bm25_idf(index, term) * tf * (index.k1 + 1) / (tf + norm)
    return score


def search_bm25(index: Bm25Index, query: str, k: int = 5) -> list[RetrievalHit]:
    if index.n_docs == 0:
        raise EmptyCorpus("BM25 index is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = tokenize(query)
    scored = []
    for doc_id in index.doc_ids:
        score = bm25_score(index, terms, doc_id)
        if score > 0.0:
            scored.append((doc_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [
        RetrievalHit(doc_id=doc_id, score=score, rank=rank, retriever_id="bm25")
        for rank, (doc_id, score) in enumerate(scored[:k], start=1)
    ]


@dataclass(frozen=True)
class DenseIndex:
    doc_ids: tuple[str, ...]
    vectors: dict[str, np.ndarray]
    dim: int


def build_dense_index(corpus: Corpus, embedder) -> DenseIndex:
    """Embed every document as ``title + " " + text`` with ``embedder.embed``."""
    if corpus.doc_count == 0:
        raise EmptyCorpus("cannot build a dense index over an empty corpus")
    texts = [f"{doc.title} {doc.text}" for doc in corpus]
    raw = embedder.embed(texts)
    vectors = [np.asarray(v, dtype=float) for v in raw]
    dims = {v.shape for v in vectors}
    if len(dims) != 1 or vectors[0].ndim != 1:
        raise DimensionMismatch(f"embedder returned inconsistent shapes: {sorted(dims)}")
    return DenseIndex(
        doc_ids=tuple(d.doc_id for d in corpus),
        vectors={d.doc_id: v for d, v in zip(corpus, vectors)},
        dim=vectors[0].shape[0],
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; defined as 0.0 when either vector has zero norm."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def search_dense(index: DenseIndex, query_vec, k: int = 5) -> list[RetrievalHit]:
    if not index.doc_ids:
        raise EmptyCorpus("dense index is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vec, dtype=float)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise DimensionMismatch(f"query has shape {q.shape}, index dim is {index.dim}")
    scored = [(doc_id, cosine(q, index.vectors[doc_id])) for doc_id in index.doc_ids]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [
        RetrievalHit(doc_id=doc_id, score=score, rank=rank, retriever_id="dense")
        for rank, (doc_id, score) in enumerate(scored[:k], start=1)
    ]


@dataclass(frozen=True)
class LabeledEvidence:
    """Per-retriever hit lists, order-preserving and never merged across labels."""

    groups: dict[str, list[RetrievalHit]] = field(default_factory=dict)

    def total_hits(self) -> int:
        return sum(len(hits) for hits in self.groups.values())


def group_retrievers(results: dict[str, list[RetrievalHit]]) -> LabeledEvidence:
    """Combine per-retriever results, collapsing duplicates within each group.

    A document retrieved twice by the same retriever keeps its best (lowest)
    rank and later hits shift up; the same document appearing under two
    different retrievers is retained in both groups.
    """
    groups: dict[str, list[RetrievalHit]] = {}
    for retriever_id, hits in results.items():
        seen: set[str] = set()
        kept: list[RetrievalHit] = []
        for hit in sorted(hits, key=lambda h: h.rank):
            if hit.doc_id in seen:
                continue
            seen.add(hit.doc_id)
            kept.append(
                RetrievalHit(
                    doc_id=hit.doc_id,
                    score=hit.score,
                    rank=len(kept) + 1,
                    retriever_id=hit.retriever_id,
                )
            )
        groups[retriever_id] = kept
    return LabeledEvidence(groups=groups)


class Bm25Retriever:
    """Search handle bound to one BM25 index, labeled with a retriever id."""

    def __init__(self, index: Bm25Index, retriever_id: str = "bm25") -> None:
        self.index = index
        self.retriever_id = retriever_id

    def search(self, query: str, k: int) -> list[RetrievalHit]:
        hits = search_bm25(self.index, query, k)
        if self.retriever_id == "bm25":
            return hits
        return [
            RetrievalHit(h.doc_id, h.score, h.rank, self.retriever_id) for h in hits
        ]


class DenseRetriever:
    """Search handle that embeds queries with a backend and scans a dense index."""

    def __init__(self, index: DenseIndex, embedder, retriever_id: str = "dense") -> None:
        self.index = index
        self.embedder = embedder
        self.retriever_id = retriever_id

    def search(self, query: str, k: int) -> list[RetrievalHit]:
        vec = self.embedder.embed([query])[0]
        hits = search_dense(self.index, vec, k)
        if self.retriever_id == "dense":
            return hits
        return [
            RetrievalHit(h.doc_id, h.score, h.rank, self.retriever_id) for h in hits
        ]
