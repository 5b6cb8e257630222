"""Exception types raised across the package.

Every error that callers are expected to catch has a named class here;
plain ValueError is reserved for violated call preconditions.
"""

from __future__ import annotations


class RagweldError(Exception):
    """Base class for all package-specific errors."""


# -- corpus ------------------------------------------------------------------


class MissingFile(RagweldError):
    pass


class MalformedLine(RagweldError):
    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(RagweldError):
    def __init__(self, doc_id: str) -> None:
        super().__init__(f"duplicate id: {doc_id!r}")
        self.doc_id = doc_id


class UnknownDocId(RagweldError):
    def __init__(self, doc_id: str) -> None:
        super().__init__(f"unknown doc id: {doc_id!r}")
        self.doc_id = doc_id


# -- retrieval ---------------------------------------------------------------


class EmptyCorpus(RagweldError):
    pass


class DimensionMismatch(RagweldError):
    pass


# -- model gateway -----------------------------------------------------------


class TransportError(RagweldError):
    """Request never produced an HTTP response, even after retries."""


class Timeout(TransportError):
    pass


class BackendError(RagweldError):
    """The backend answered, but with an error status or a bad payload."""

    def __init__(self, status: int, body: str) -> None:
        super().__init__(f"backend returned {status}: {body[:200]}")
        self.status = status
        self.body = body


class EmptyLogprobs(RagweldError):
    pass


class PositiveLogprob(RagweldError):
    pass


# -- pipelines ---------------------------------------------------------------


class RetrievalError(RagweldError):
    pass


class NoLogprobsAvailable(RagweldError):
    pass


# -- ensemble ----------------------------------------------------------------


class EmptyTraces(RagweldError):
    pass


class EmptyOutput(RagweldError):
    pass


class UnparsableSelection(RagweldError):
    pass


class IndexOutOfRange(RagweldError):
    pass


# -- evaluation --------------------------------------------------------------


class EmptyGolds(RagweldError):
    pass


# -- info theory -------------------------------------------------------------


class UnknownVariable(RagweldError):
    def __init__(self, name: str) -> None:
        super().__init__(f"unknown variable: {name!r}")
        self.name = name


class OverlappingSubsets(RagweldError):
    pass


class WrongVariableSet(RagweldError):
    pass


# -- experiments -------------------------------------------------------------


class CombinatorialLimitExceeded(RagweldError):
    pass


class RunIdExists(RagweldError):
    def __init__(self, run_id: str) -> None:
        super().__init__(f"run id already exists: {run_id!r}")
        self.run_id = run_id


class IoError(RagweldError):
    pass


# -- cli ---------------------------------------------------------------------


class ConfigError(RagweldError):
    def __init__(self, field: str, reason: str) -> None:
        super().__init__(f"config field {field!r}: {reason}")
        self.field = field
        self.reason = reason
