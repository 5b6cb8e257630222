import math
import random

import numpy as np
import pytest

from ragweld.corpus import Corpus, Document, tokenize
from ragweld.errors import DimensionMismatch, EmptyCorpus
from ragweld.gateway import HashingEmbedder
from ragweld.retrieval import (
    Bm25Retriever,
    DenseRetriever,
    RetrievalHit,
    bm25_idf,
    bm25_score,
    build_bm25_index,
    build_dense_index,
    cosine,
    group_retrievers,
    search_bm25,
    search_dense,
)


def brute_force_bm25(docs: list[tuple[str, str]], query: str, k1=1.5, b=0.75):
    """Reference scorer written straight from the textbook formula.

    ``docs`` is (doc_id, text). Each query token occurrence contributes one
    summand. Returns {doc_id: score} for score > 0.
    """
    n = len(docs)
    token_lists = {doc_id: tokenize(text) for doc_id, text in docs}
    avgdl = sum(len(t) for t in token_lists.values()) / n
    df = {}
    for tokens in token_lists.values():
        for term in set(tokens):
            df[term] = df.get(term, 0) + 1
    scores = {}
    for doc_id, tokens in token_lists.items():
        dl = len(tokens)
        score = 0.0
        for term in tokenize(query):
            tf = tokens.count(term)
            if tf == 0 or term not in df:
                continue
            idf = math.log(1.0 + (n - df[term] + 0.5) / (df[term] + 0.5))
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
        if score > 0.0:
            scores[doc_id] = score
    return scores


def corpus_of(docs: list[tuple[str, str]]) -> Corpus:
    return Corpus([Document(doc_id, f"title {doc_id}", text) for doc_id, text in docs])


WORDS = [
    "amber", "basalt", "cedar", "delta", "ember", "fjord", "garnet", "harbor",
    "iris", "juniper", "krill", "lagoon", "mesa", "nectar", "onyx", "prairie",
]


def random_docs(rng: random.Random, n_docs: int) -> list[tuple[str, str]]:
    return [
        (f"d{i:03d}", " ".join(rng.choices(WORDS, k=rng.randint(3, 30))))
        for i in range(n_docs)
    ]


class TestBm25:
    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            build_bm25_index(Corpus([]))

    def test_idf_is_strictly_positive_even_for_ubiquitous_terms(self):
        corpus = corpus_of([("a", "cat cat"), ("b", "cat dog")])
        index = build_bm25_index(corpus)
        assert bm25_idf(index, "cat") == pytest.approx(math.log(1 + 0.5 / 2.5))
        assert bm25_idf(index, "cat") > 0.0

    def test_unknown_term_scores_zero(self):
        corpus = corpus_of([("a", "cat"), ("b", "dog")])
        index = build_bm25_index(corpus)
        assert bm25_score(index, ["zebra"], "a") == 0.0
        assert search_bm25(index, "zebra", k=5) == []

    def test_zero_score_documents_excluded(self):
        corpus = corpus_of([("a", "cat sat"), ("b", "dog ran")])
        index = build_bm25_index(corpus)
        hits = search_bm25(index, "cat", k=5)
        assert [h.doc_id for h in hits] == ["a"]

    def test_shorter_document_outranks_longer_at_equal_tf(self):
        corpus = corpus_of([("long", "sat on the mat by the door"), ("short", "sat down")])
        index = build_bm25_index(corpus)
        hits = search_bm25(index, "sat", k=2)
        assert [h.doc_id for h in hits] == ["short", "long"]

    def test_ties_break_by_ascending_doc_id(self):
        corpus = corpus_of([("b", "cat"), ("a", "cat"), ("c", "cat")])
        index = build_bm25_index(corpus)
        hits = search_bm25(index, "cat", k=3)
        assert [h.doc_id for h in hits] == ["a", "b", "c"]
        assert [h.rank for h in hits] == [1, 2, 3]

    def test_k_truncates(self):
        corpus = corpus_of([(f"d{i}", "cat") for i in range(10)])
        index = build_bm25_index(corpus)
        assert len(search_bm25(index, "cat", k=4)) == 4

    def test_matches_brute_force_on_random_corpora(self):
        rng = random.Random(1711)
        for trial in range(25):
            docs = random_docs(rng, rng.randint(2, 40))
            corpus = corpus_of(docs)
            index = build_bm25_index(corpus)
            query = " ".join(rng.choices(WORDS, k=rng.randint(1, 5)))
            expected = brute_force_bm25(docs, query)
            hits = search_bm25(index, query, k=len(docs))
            assert {h.doc_id for h in hits} == set(expected)
            for h in hits:
                assert h.score == pytest.approx(expected[h.doc_id], abs=1e-9)
            ordered = sorted(expected.items(), key=lambda kv: (-kv[1], kv[0]))
            assert [h.doc_id for h in hits] == [doc_id for doc_id, _ in ordered]

    def test_repeated_query_terms_sum_per_occurrence(self):
        corpus = corpus_of([("a", "cat sat"), ("b", "dog sat")])
        index = build_bm25_index(corpus)
        single = search_bm25(index, "cat", k=2)[0].score
        doubled = search_bm25(index, "cat cat", k=2)[0].score
        assert doubled == pytest.approx(2 * single, abs=1e-12)

    # Frozen before the index code was written: corpus {D1: "cat sat",
    # D2: "dog sat sat"}, query [sat], evaluated by hand from the closed form.
    def test_hand_derived_constants(self):
        corpus = corpus_of([("D1", "cat sat"), ("D2", "dog sat sat")])
        index = build_bm25_index(corpus)
        assert bm25_idf(index, "sat") == pytest.approx(0.1823215567939546, abs=1e-12)
        assert bm25_score(index, ["sat"], "D2") == pytest.approx(
            0.24472692187108, abs=1e-9
        )
        assert bm25_score(index, ["sat"], "D1") == pytest.approx(
            0.20035335911423582, abs=1e-9
        )
        hits = search_bm25(index, "sat", k=2)
        assert [h.doc_id for h in hits] == ["D2", "D1"]


class TestDense:
    def test_cosine_zero_norm_is_zero(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0
        assert cosine([1.0, 0.0], [0.0, 0.0]) == 0.0

    def test_cosine_basics(self):
        assert cosine([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
        assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
        assert cosine([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0)

    def test_search_is_exhaustive_and_sorted(self):
        corpus = corpus_of([("a", "amber basalt"), ("b", "cedar delta"), ("c", "amber amber")])
        embedder = HashingEmbedder(dim=32)
        index = build_dense_index(corpus, embedder)
        query_vec = embedder.embed(["amber"])[0]
        hits = search_dense(index, query_vec, k=3)
        assert len(hits) == 3
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)
        expected = {
            doc_id: cosine(query_vec, index.vectors[doc_id]) for doc_id in index.doc_ids
        }
        for h in hits:
            assert h.score == pytest.approx(expected[h.doc_id], abs=1e-12)

    def test_zero_scores_are_not_excluded(self):
        corpus = corpus_of([("a", "amber"), ("b", "basalt")])
        embedder = HashingEmbedder(dim=16)
        index = build_dense_index(corpus, embedder)
        hits = search_dense(index, [0.0] * 16, k=2)
        assert len(hits) == 2
        assert all(h.score == 0.0 for h in hits)

    def test_query_dimension_checked(self):
        corpus = corpus_of([("a", "amber")])
        index = build_dense_index(corpus, HashingEmbedder(dim=16))
        with pytest.raises(DimensionMismatch):
            search_dense(index, [1.0] * 8, k=1)

    def test_index_embeds_title_and_text(self):
        docs = [Document("a", "amber", "basalt")]
        index = build_dense_index(Corpus(docs), HashingEmbedder(dim=32))
        expected = HashingEmbedder(dim=32).embed(["amber basalt"])[0]
        assert np.allclose(index.vectors["a"], expected)


class TestGrouping:
    def hit(self, doc_id, score, rank, retriever_id="bm25"):
        return RetrievalHit(doc_id=doc_id, score=score, rank=rank, retriever_id=retriever_id)

    def test_within_group_duplicates_keep_best_rank(self):
        evidence = group_retrievers(
            {
                "bm25": [
                    self.hit("a", 2.0, 1),
                    self.hit("b", 1.0, 2),
                    self.hit("a", 0.5, 3),
                ]
            }
        )
        kept = evidence.groups["bm25"]
        assert [(h.doc_id, h.rank) for h in kept] == [("a", 1), ("b", 2)]
        assert evidence.total_hits() == 2

    def test_across_groups_duplicates_are_retained(self):
        evidence = group_retrievers(
            {
                "bm25": [self.hit("a", 2.0, 1)],
                "dense": [self.hit("a", 0.9, 1, "dense")],
            }
        )
        assert evidence.total_hits() == 2
        assert {h.retriever_id for hits in evidence.groups.values() for h in hits} == {
            "bm25",
            "dense",
        }

    def test_retriever_wrappers_relabel(self):
        corpus = corpus_of([("a", "amber fjord")])
        sparse = Bm25Retriever(build_bm25_index(corpus), retriever_id="sparse-1")
        assert sparse.search("amber", k=1)[0].retriever_id == "sparse-1"
        embedder = HashingEmbedder(dim=16)
        dense = DenseRetriever(build_dense_index(corpus, embedder), embedder, retriever_id="dense-1")
        assert dense.search("amber", k=1)[0].retriever_id == "dense-1"
