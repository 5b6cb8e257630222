"""Chat and embedding access behind one small interface.

Two backends implement it: an HTTP client for OpenAI-compatible servers
(``POST {base_url}/chat/completions`` and ``POST {base_url}/embeddings``,
bearer token read from ``RAGWELD_API_KEY``) and a scripted mock whose
responses are a pure function of the request, so experiments replay
identically at any concurrency level.

Retry policy: transport failures and 429/5xx statuses are retried with
exponential backoff (0.5s, 1s, 2s); other statuses fail immediately.
In-flight requests per backend are bounded by a semaphore.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .corpus import tokenize
from .errors import (
    BackendError,
    DimensionMismatch,
    EmptyLogprobs,
    PositiveLogprob,
    Timeout,
    TransportError,
)

API_KEY_ENV = "RAGWELD_API_KEY"
DEFAULT_MAX_TOKENS = 512
DEFAULT_MAX_IN_FLIGHT = 8

_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    want_logprobs: bool = False

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        non_system = [m for m in self.messages if m.role != "system"]
        if not non_system or non_system[0].role != "user":
            raise ValueError("first non-system message must have role 'user'")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    token_logprobs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.token_logprobs is not None:
            if len(self.token_logprobs) == 0:
                raise ValueError("token_logprobs must be None or non-empty")
            if any(lp > 0 for lp in self.token_logprobs):
                raise ValueError("token logprobs must be <= 0")


def user_request(model_id: str, prompt: str, **kwargs) -> ChatRequest:
    return ChatRequest(model_id=model_id, messages=(Message("user", prompt),), **kwargs)


def encode_chat_request(req: ChatRequest) -> bytes:
    """Canonical wire encoding of a chat request (stable key order)."""
    payload = {
        "model": req.model_id,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "logprobs": req.want_logprobs,
    }
    return json.dumps(payload, sort_keys=True, ensure_ascii=True).encode("utf-8")


def decode_chat_request(data: bytes) -> ChatRequest:
    payload = json.loads(data.decode("utf-8"))
    return ChatRequest(
        model_id=payload["model"],
        messages=tuple(Message(m["role"], m["content"]) for m in payload["messages"]),
        temperature=payload["temperature"],
        max_tokens=payload["max_tokens"],
        want_logprobs=payload["logprobs"],
    )


def perplexity(token_logprobs) -> float:
    """exp(-mean(logprobs)) over natural-log token probabilities."""
    lps = list(token_logprobs)
    if not lps:
        raise EmptyLogprobs("perplexity requires at least one logprob")
    if any(lp > 0 for lp in lps):
        raise PositiveLogprob("log probabilities cannot be positive")
    return math.exp(-sum(lps) / len(lps))


def chat(backend, req: ChatRequest) -> ChatResponse:
    return backend.chat(req)


def embed(backend, texts: list[str]) -> list[list[float]]:
    if not texts:
        raise ValueError("embed requires at least one text")
    return backend.embed(texts)


class HashingEmbedder:
    """Deterministic bag-of-tokens embedder for offline runs.

    Each token increments one coordinate chosen by hashing the token, so
    identical texts embed identically and texts sharing no tokens are
    (collisions aside) orthogonal.
    """

    def __init__(self, dim: int = 64, backend_id: str = "hash-embed") -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.backend_id = backend_id

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            for token in tokenize(text):
                vec[self._bucket(token)] += 1.0
            out.append(vec)
        return out


@dataclass(frozen=True)
class MockRule:
    pattern: str
    response: str
    logprobs: tuple[float, ...] | None = None


@dataclass(frozen=True)
class MockScript:
    """Substring-matched canned responses; first matching rule wins."""

    rules: tuple[MockRule, ...] = ()
    default_response: str = ""

    @classmethod
    def from_json(cls, path: str | Path) -> "MockScript":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise ValueError("mock script must be a JSON list")
        rules: list[MockRule] = []
        default = ""
        for entry in entries:
            if "default" in entry:
                default = entry["default"]
                continue
            logprobs = entry.get("logprobs")
            rules.append(
                MockRule(
                    pattern=entry["pattern"],
                    response=entry["response"],
                    logprobs=tuple(logprobs) if logprobs is not None else None,
                )
            )
        return cls(rules=tuple(rules), default_response=default)

    def lookup(self, text: str) -> MockRule:
        for rule in self.rules:
            if rule.pattern in text:
                return rule
        return MockRule(pattern="", response=self.default_response, logprobs=None)


class MockBackend:
    """Offline backend driven by a :class:`MockScript`.

    Responses depend only on the request content, never on call order, so
    the backend stays deterministic under concurrent use. Call counters are
    kept for tests that assert how many requests an orchestration makes.
    """

    def __init__(
        self,
        script: MockScript,
        backend_id: str = "mock",
        embed_dim: int = 64,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ) -> None:
        self.script = script
        self.backend_id = backend_id
        self._embedder = HashingEmbedder(dim=embed_dim, backend_id=backend_id)
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self.chat_calls = 0
        self.embed_calls = 0

    def chat(self, req: ChatRequest) -> ChatResponse:
        with self._gate:
            with self._lock:
                self.chat_calls += 1
            joined = "\n".join(m.content for m in req.messages)
            rule = self.script.lookup(joined)
            logprobs = rule.logprobs if req.want_logprobs else None
            return ChatResponse(
                text=rule.response, backend_id=self.backend_id, token_logprobs=logprobs
            )

    def embed(self, texts: list[str]) -> list[list[float]]:
        with self._gate:
            with self._lock:
                self.embed_calls += 1
            return self._embedder.embed(texts)


def _retryable(status: int) -> bool:
    return status == 429 or 500 <= status <= 599


class HttpBackend:
    """OpenAI-compatible HTTP backend."""

    def __init__(
        self,
        base_url: str,
        model_id: str,
        backend_id: str | None = None,
        retries: int = 2,
        backoff_base: float = 0.5,
        timeout: float = 30.0,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.backend_id = backend_id or model_id
        self.retries = retries
        self.backoff_base = backoff_base
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        attempts = self.retries + 1
        last_exc: Exception | None = None
        last_response: httpx.Response | None = None
        for attempt in range(attempts):
            if attempt > 0 and self.backoff_base > 0:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._gate:
                    response = self._client.post(url, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                last_exc = exc
                continue
            except httpx.TransportError as exc:
                last_exc = exc
                continue
            if response.status_code == 200:
                try:
                    return response.json()
                except (json.JSONDecodeError, ValueError):
                    raise BackendError(response.status_code, response.text)
            if _retryable(response.status_code):
                last_response = response
                last_exc = None
                continue
            raise BackendError(response.status_code, response.text)
        if last_response is not None:
            raise BackendError(last_response.status_code, last_response.text)
        if isinstance(last_exc, httpx.TimeoutException):
            raise Timeout(f"{url}: {last_exc}")
        raise TransportError(f"{url}: {last_exc}")

    def chat(self, req: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "logprobs": req.want_logprobs,
        }
        data = self._post("/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(200, json.dumps(data)[:500])
        logprobs = None
        raw_logprobs = choice.get("logprobs")
        if req.want_logprobs and raw_logprobs:
            content = raw_logprobs.get("content") or []
            if content:
                logprobs = tuple(entry["logprob"] for entry in content)
        try:
            return ChatResponse(
                text=text, backend_id=self.backend_id, token_logprobs=logprobs
            )
        except ValueError as exc:
            raise BackendError(200, f"invalid response payload: {exc}")

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed requires at least one text")
        data = self._post("/embeddings", {"model": self.model_id, "input": list(texts)})
        try:
            vectors = [np.asarray(item["embedding"], dtype=float) for item in data["data"]]
        except (KeyError, TypeError):
            raise BackendError(200, json.dumps(data)[:500])
        if len(vectors) != len(texts):
            raise BackendError(200, f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"embeddings disagree on dimension: {sorted(dims)}")
        return [v.tolist() for v in vectors]
