"""Pluggable model backends: answer generation, entailment scoring, text
embedding, and passage reranking.

Each contract has an HTTP+JSON client (for an external model service) and a
deterministic mock good enough for desk-scale runs and tests. Mocks are pure
functions of their inputs plus a seed.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import requests

from .sparse_index import tokenize

logger = logging.getLogger(__name__)

ABSTENTION = "[NO-ANSWER]"

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3
DEFAULT_MAX_IN_FLIGHT = 8


class BackendError(RuntimeError):
    """Base class for backend failures."""


class TransportError(BackendError):
    """Service unreachable, timed out, or returned a non-2xx status."""


class ProtocolError(BackendError):
    """Service reachable but its response violates the wire contract."""


@dataclass(frozen=True)
class GeneratorRequest:
    question: str
    passages: tuple[tuple[str, str], ...] = ()  # (title, text) pairs
    exemplars: tuple[tuple[str, str], ...] = ()  # (question, answer) pairs

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")


@dataclass(frozen=True)
class GeneratorResponse:
    answer: str
    url: str | None = None


@dataclass(frozen=True)
class EntailmentQuery:
    premise: str
    hypothesis: str

    def __post_init__(self) -> None:
        if not self.premise or not self.hypothesis:
            raise ValueError("premise and hypothesis must be non-empty")


def render_hypothesis(question: str, answer: str) -> str:
    """Fixed entailment-hypothesis template so scoring is reproducible."""
    return f"Question: {question} Answer: {answer}"


def render_premise(title: str, text: str) -> str:
    """Premise is the passage text prefixed by its page title when present."""
    return f"{title}. {text}" if title else text


# ---------------------------------------------------------------------------
# HTTP clients
# ---------------------------------------------------------------------------


class HttpBackend:
    """Shared HTTP+JSON transport: bounded retries with exponential backoff,
    a per-call timeout, and a cap on concurrent in-flight calls."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = 0.5,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    response = self._session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if response.status_code >= 500:
                last_exc = TransportError(f"{url}: HTTP {response.status_code}")
                continue
            if not 200 <= response.status_code < 300:
                raise TransportError(f"{url}: HTTP {response.status_code}")
            try:
                data = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{url}: response is not JSON") from exc
            if not isinstance(data, dict):
                raise ProtocolError(f"{url}: expected a JSON object")
            return data
        raise TransportError(f"{url}: unreachable after {self.retries + 1} attempts: {last_exc}")


class HttpGenerator(HttpBackend):
    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        payload: dict = {"question": request.question}
        if request.passages:
            payload["passages"] = [{"title": t, "text": x} for t, x in request.passages]
        if request.exemplars:
            payload["exemplars"] = [{"question": q, "answer": a} for q, a in request.exemplars]
        data = self._post("/generate", payload)
        answer = data.get("answer")
        if not isinstance(answer, str):
            raise ProtocolError("generate: missing or non-string 'answer'")
        url = data.get("url")
        if url is not None and not isinstance(url, str):
            raise ProtocolError("generate: 'url' must be a string when present")
        return GeneratorResponse(answer=answer, url=url)


class HttpEntailmentScorer(HttpBackend):
    def entail(self, query: EntailmentQuery) -> float:
        data = self._post("/entail", {"premise": query.premise, "hypothesis": query.hypothesis})
        score = data.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError("entail: missing or non-numeric 'score'")
        if not 0.0 <= score <= 1.0:
            logger.warning("entail: score %s outside [0,1], clamping", score)
            score = min(1.0, max(0.0, float(score)))
        return float(score)


class HttpEmbedder(HttpBackend):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed: texts must be non-empty")
        data = self._post("/embed", {"texts": list(texts)})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError("embed: 'vectors' must match the number of texts")
        dims = {len(v) for v in vectors if isinstance(v, list)}
        if len(dims) != 1 or any(not isinstance(v, list) for v in vectors):
            raise ProtocolError("embed: vectors must all share one dimension")
        return [[float(x) for x in vector] for vector in vectors]


class HttpReranker(HttpBackend):
    def rerank(self, question: str, passages: Sequence[tuple[str, str, str]]) -> list[str]:
        """Reorder (id, title, text) passages; the service returns ids only."""
        if not passages:
            raise ValueError("rerank: passages must be non-empty")
        payload = {
            "question": question,
            "passages": [{"id": pid, "title": t, "text": x} for pid, t, x in passages],
        }
        data = self._post("/rerank", payload)
        ids = data.get("ids")
        if not isinstance(ids, list) or any(not isinstance(i, str) for i in ids):
            raise ProtocolError("rerank: 'ids' must be a list of strings")
        if sorted(ids) != sorted(pid for pid, _, _ in passages):
            raise ProtocolError("rerank: returned ids are not a permutation of the input")
        return ids


# ---------------------------------------------------------------------------
# Deterministic mocks
# ---------------------------------------------------------------------------


class MockGenerator:
    """Answer lookup keyed by question text.

    Values are either an answer string or an (answer, url) pair for
    URL-emitting configurations. Unknown questions yield the abstention
    marker.
    """

    def __init__(
        self,
        answers: Mapping[str, str | tuple[str, str | None]] | None = None,
        *,
        abstention: str = ABSTENTION,
    ):
        self._answers = dict(answers or {})
        self._abstention = abstention

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        entry = self._answers.get(request.question)
        if entry is None:
            return GeneratorResponse(answer=self._abstention)
        if isinstance(entry, str):
            return GeneratorResponse(answer=entry)
        answer, url = entry
        return GeneratorResponse(answer=answer, url=url)


class MockEntailmentScorer:
    """Token-recall rule: the fraction of answer tokens found in the premise,
    stepped at 0.6 to either 0.9 (entailed) or 0.1 (not).

    The answer tokens are whatever follows the last "answer" marker in the
    tokenized hypothesis (the whole hypothesis when no marker is present).
    """

    def __init__(self, threshold: float = 0.6, high: float = 0.9, low: float = 0.1):
        self.threshold = threshold
        self.high = high
        self.low = low

    def entail(self, query: EntailmentQuery) -> float:
        hyp_tokens = tokenize(query.hypothesis)
        answer_tokens = hyp_tokens
        for i in range(len(hyp_tokens) - 1, -1, -1):
            if hyp_tokens[i] == "answer":
                answer_tokens = hyp_tokens[i + 1 :]
                break
        if not answer_tokens:
            return self.low
        premise_tokens = set(tokenize(query.premise))
        recall = sum(1 for t in answer_tokens if t in premise_tokens) / len(answer_tokens)
        return self.high if recall >= self.threshold else self.low


class MockEmbedder:
    """Feature-hashed token counts, L2-normalized. Pure function of the text
    and the seed; identical texts always embed identically."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._key = seed.to_bytes(8, "big", signed=True)

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("embed: texts must be non-empty")
        vectors = []
        for text in texts:
            vector = [0.0] * self.dim
            for token in tokenize(text):
                vector[self._bucket(token)] += 1.0
            norm = math.sqrt(sum(x * x for x in vector))
            if norm > 0.0:
                vector = [x / norm for x in vector]
            vectors.append(vector)
        return vectors


class MockReranker:
    """Identity reranker: preserves the input order."""

    def rerank(self, question: str, passages: Sequence[tuple[str, str, str]]) -> list[str]:
        if not passages:
            raise ValueError("rerank: passages must be non-empty")
        return [pid for pid, _, _ in passages]
