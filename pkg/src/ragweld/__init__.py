"""Ensemble orchestration for retrieval-augmented generation systems.

Run several heterogeneous RAG pipelines on the same question, then fuse
their answers and evidence with a single ensemble model, either by
generating a new answer from the pooled traces or by selecting the best
candidate. See README.md for the command-line entry points.
"""

from .corpus import Corpus, Document, get_document, ingest_corpus, tokenize
from .ensemble import (
    EnsembleOutput,
    Ranking,
    assemble_ensemble_prompt,
    assemble_selection_prompt,
    ensemble_generate,
    ensemble_rerank,
    ensemble_select,
    parse_answer,
    postcheck_ranking,
    rerank_documents,
)
from .errors import RagweldError
from .evaluation import (
    MetricsReport,
    QuestionScore,
    evaluate_run,
    exact_match,
    normalize_answer,
    rouge_l,
    token_f1,
)
from .experiments import (
    PreferenceReport,
    RunManifest,
    ScalingCurve,
    SystemSpec,
    load_run,
    persist_run,
    preference_scores,
    run_main,
    run_scaling,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    HashingEmbedder,
    HttpBackend,
    Message,
    MockBackend,
    MockScript,
    perplexity,
    user_request,
)
from .info_theory import (
    BoundReport,
    DiscreteJoint,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    marginal,
    mutual_information,
    verify_ensemble_bound,
)
from .pipelines import (
    PIPELINES,
    EvidenceDoc,
    PipelineConfig,
    Question,
    Runtime,
    SystemTrace,
    load_questions,
    run_agentic,
    run_branching,
    run_iterative,
    run_loop,
    run_standard,
)
from .retrieval import (
    Bm25Retriever,
    DenseRetriever,
    RetrievalHit,
    build_bm25_index,
    build_dense_index,
    cosine,
    group_retrievers,
    search_bm25,
    search_dense,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "Bm25Retriever",
    "ChatRequest",
    "ChatResponse",
    "Corpus",
    "DenseRetriever",
    "DiscreteJoint",
    "Document",
    "EnsembleOutput",
    "EvidenceDoc",
    "HashingEmbedder",
    "HttpBackend",
    "Message",
    "MetricsReport",
    "MockBackend",
    "MockScript",
    "PIPELINES",
    "PipelineConfig",
    "PreferenceReport",
    "Question",
    "QuestionScore",
    "RagweldError",
    "Ranking",
    "RetrievalHit",
    "RunManifest",
    "Runtime",
    "ScalingCurve",
    "SystemSpec",
    "SystemTrace",
    "assemble_ensemble_prompt",
    "assemble_selection_prompt",
    "build_bm25_index",
    "build_dense_index",
    "conditional_entropy",
    "conditional_mutual_information",
    "cosine",
    "ensemble_generate",
    "ensemble_rerank",
    "ensemble_select",
    "entropy",
    "evaluate_run",
    "exact_match",
    "get_document",
    "group_retrievers",
    "ingest_corpus",
    "load_questions",
    "load_run",
    "marginal",
    "mutual_information",
    "normalize_answer",
    "parse_answer",
    "persist_run",
    "perplexity",
    "postcheck_ranking",
    "preference_scores",
    "rerank_documents",
    "rouge_l",
    "run_agentic",
    "run_branching",
    "run_iterative",
    "run_loop",
    "run_main",
    "run_scaling",
    "run_standard",
    "search_bm25",
    "search_dense",
    "token_f1",
    "tokenize",
    "user_request",
    "verify_ensemble_bound",
]
