"""Document corpus loading and tokenization.

A corpus is an ordered, immutable collection of documents read from a JSONL
file where each line carries ``id``, ``title`` and ``contents``. Tokenization
is deliberately simple (lowercase, split on non-alphanumeric runs) and is
shared by the sparse index and the evaluation bag-of-words metrics' cousins.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateId, MalformedLine, MissingFile, UnknownDocId

# Maximal runs of alphanumeric characters; underscore is not alphanumeric.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} has empty text")


class Corpus:
    """Ordered document collection with O(1) lookup by id."""

    def __init__(self, documents: list[Document] | tuple[Document, ...]) -> None:
        self.documents: tuple[Document, ...] = tuple(documents)
        self._by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.doc_id in self._by_id:
                raise DuplicateId(doc.doc_id)
            self._by_id[doc.doc_id] = doc

    @property
    def doc_count(self) -> int:
        return len(self.documents)

    @property
    def avg_doc_len(self) -> float:
        # Mean token count of document bodies; titles are not indexed.
        if not self.documents:
            return 0.0
        return sum(len(tokenize(d.text)) for d in self.documents) / len(self.documents)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id


def get_document(corpus: Corpus, doc_id: str) -> Document:
    try:
        return corpus._by_id[doc_id]
    except KeyError:
        raise UnknownDocId(doc_id) from None


def ingest_corpus(path: str | Path) -> Corpus:
    """Read a JSONL corpus file into a :class:`Corpus`.

    Each line must be a JSON object with ``id`` and ``contents`` (non-empty
    strings) and an optional ``title``. Raises :class:`MissingFile`,
    :class:`MalformedLine` (with the 1-based line number) or
    :class:`DuplicateId`.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    docs: list[Document] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            doc_id = obj.get("id")
            contents = obj.get("contents")
            if not isinstance(doc_id, str) or not doc_id:
                raise MalformedLine(line_no, "missing or empty 'id'")
            if not isinstance(contents, str) or not contents.strip():
                raise MalformedLine(line_no, "missing or empty 'contents'")
            if doc_id in seen:
                raise DuplicateId(doc_id)
            seen.add(doc_id)
            title = obj.get("title", "")
            if not isinstance(title, str):
                raise MalformedLine(line_no, "'title' must be a string")
            docs.append(Document(doc_id=doc_id, title=title, text=contents))
    return Corpus(docs)
