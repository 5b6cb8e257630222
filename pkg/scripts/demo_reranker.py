#!/usr/bin/env python3
"""Document-ranking fusion demo.

Two mock rerankers order the same four-document pool; one of them returns a
sloppy ranking (duplicate and out-of-range ids) that the post-check repairs.
The fused top slices go to an ensemble mock that answers from the pooled
evidence.

Usage: python3 scripts/demo_reranker.py
"""

from ragweld.ensemble import ensemble_rerank, postcheck_ranking, rerank_documents
from ragweld.gateway import MockBackend, MockRule, MockScript
from ragweld.pipelines import EvidenceDoc, Question

QUESTION = Question(
    q_id="demo",
    text="Which river crosses the capital of France?",
    gold_answers=("the Seine",),
)

POOL = [
    EvidenceDoc("d1", "Geography", "Paris has been the capital of France since 987.", 2.4, 1, "bm25"),
    EvidenceDoc("d2", "Capitals", "Berlin is the capital of Germany; Madrid of Spain.", 1.1, 2, "bm25"),
    EvidenceDoc("d3", "Rivers", "The Seine crosses Paris on its way to the Channel.", 0.9, 3, "bm25"),
    EvidenceDoc("d4", "Cuisine", "French cuisine ranges from bistro fare to haute cuisine.", 0.2, 4, "bm25"),
]


def scripted(response: str, name: str) -> MockBackend:
    return MockBackend(
        MockScript(rules=(), default_response=response), backend_id=name
    )


def run() -> None:
    tidy = rerank_documents(QUESTION, POOL, scripted("<answer>\\boxed{3, 1, 2, 4}</answer>", "r1"))
    sloppy = rerank_documents(QUESTION, POOL, scripted("<answer>\\boxed{3, 3, 12, 1}</answer>", "r2"))
    print(f"reranker 1 raw order: {tidy.doc_ids}")
    print(f"reranker 2 raw order: {sloppy.doc_ids}")
    print(f"reranker 2 repaired:  {postcheck_ranking(sloppy).doc_ids}")

    answerer = scripted(
        "<think>The Rivers document names it.</think><answer>\\boxed{the Seine} </answer>",
        "fuser",
    )
    output = ensemble_rerank(QUESTION, [tidy, sloppy], POOL, answerer, top_k=2)
    print(f"fused answer: {output.final_answer!r}")
    print(f"reasoning:    {output.reasoning!r}")


if __name__ == "__main__":
    run()
