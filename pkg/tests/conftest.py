import json
from pathlib import Path

import pytest

from ragweld.corpus import ingest_corpus
from ragweld.gateway import MockBackend, MockScript
from ragweld.pipelines import Runtime, load_questions
from ragweld.retrieval import Bm25Retriever, build_bm25_index

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def make_corpus_file(tmp_path: Path, docs: list[tuple[str, str, str]]) -> Path:
    return write_jsonl(
        tmp_path / "corpus.jsonl",
        [{"id": i, "title": t, "contents": c} for i, t, c in docs],
    )


def fixture_runtime(fixture: str, scripts: dict[str, str], k1: float = 1.5, b: float = 0.75):
    """Build a Runtime over one tests/data fixture directory.

    ``scripts`` maps backend ids to script file names inside the fixture.
    Returns (runtime, questions, backends-by-id).
    """
    root = DATA_DIR / fixture
    corpus = ingest_corpus(root / "corpus.jsonl")
    questions = load_questions(root / "questions.jsonl")
    backends = {
        backend_id: MockBackend(MockScript.from_json(root / name), backend_id=backend_id)
        for backend_id, name in scripts.items()
    }
    runtime = Runtime(
        corpus=corpus,
        retrievers={"bm25": Bm25Retriever(build_bm25_index(corpus, k1=k1, b=b))},
        backends=backends,
    )
    return runtime, questions, backends
