"""Prompt templates, kept in one place and versioned.

These strings are load-bearing: golden tests pin their rendered bytes, so
any edit here is a deliberate, visible change. Bump PROMPT_VERSION when a
template changes so persisted runs can be told apart.
"""

from __future__ import annotations

PROMPT_VERSION = "1"

# Per-document character budget used when rendering evidence lines.
DOC_CHAR_BUDGET = 500

TRUNCATION_MARK = "…"

ANSWER_FORMAT_INSTRUCTIONS = (
    "Your task is to answer the question based on the given information. "
    "You should first output your reasoning process and then provide the final answer. "
    "The output format of reasoning process and final answer should be enclosed within "
    "<think> </think> and <answer> </answer> tags, respectively, and the final answer "
    "should be enclosed within \\boxed{} with latex format, i.e., "
    '"<think> reasoning process here </think><answer>\\boxed{a final answer here} '
    '</answer>". Only output your reasoning process in <think></think> and your answer '
    "in <answer> boxed{} </answer>, and do not output any other words."
)

FUSION_HEADER = (
    "Here is a question and some external data from {num} systems' information:"
)

SELECTION_HEADER = "Here is a question and {num} candidate answers from different systems:"

SELECTION_INSTRUCTIONS = (
    "Your task is to select the optimal answer from the given candidate answers. "
    "You should first output your reasoning process and then provide the final answer. "
    "The output format of reasoning process and final answer should be enclosed within "
    "<think> </think> and <answer> </answer> tags, respectively, and the final answer "
    "should be the index of the selected candidate enclosed within \\boxed{} with latex "
    'format, i.e., "<think> reasoning process here </think><answer>\\boxed{2} '
    '</answer>". Only output your reasoning process in <think></think> and your answer '
    "in <answer> boxed{} </answer>, and do not output any other words."
)

RERANK_POOL_HEADER = "Here is a question and {num} candidate documents:"

RERANK_POOL_INSTRUCTIONS = (
    "Rank all {num} documents by relevance to the question in descending order. "
    "Output only the document numbers as a comma-separated list, i.e., "
    '"{example}", and do not output any other words.'
)

RERANK_FUSION_HEADER = (
    "Here is a question and {num} sets of ranked documents from different rerankers; "
    "each set is ordered by descending relevance:"
)

QA_HEADER = "Answer the question based on the given documents."

QA_NO_DOCUMENTS_NOTICE = "No documents were retrieved for this question."

QA_FOOTER = "Give a short final answer. Do not output any other words."

AGENT_SYSTEM_PROMPT = (
    "You are a question answering assistant. You may search an external corpus "
    "before answering.\n"
    "To search, output exactly <search>your query</search> and nothing else; search "
    "results will then be provided to you between <information> and </information> "
    "tags.\n"
    "When you can answer, output <answer>\\boxed{your final answer}</answer>."
)

AGENT_FORCED_ANSWER = (
    "You have used all available search turns. Output your final answer now as "
    "<answer>\\boxed{your final answer}</answer>."
)

NO_SEARCH_RESULTS_NOTICE = "No documents found."


def doc_text(title: str, text: str, budget: int = DOC_CHAR_BUDGET) -> str:
    """Render one document as ``title: text``, truncating long bodies to the budget."""
    if len(text) > budget:
        text = text[:budget] + TRUNCATION_MARK
    return f"{title}: {text}"


def doc_line(title: str, text: str, budget: int = DOC_CHAR_BUDGET) -> str:
    return f"- {doc_text(title, text, budget)}"
