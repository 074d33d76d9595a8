"""Answer+attribution pipelines over a question set.

Three architectures:

* retrieve-then-read: retrieve k passages for the question, optionally
  rerank, generate an answer from the top P passages, attribute per the
  configured selection mode;
* post-hoc: generate an answer from exemplars first, then retrieve with
  "question answer" as the query and attribute;
* URL generation: the generator emits (answer, page URL) and the attribution
  is the best passage of that page.

Per-question failures (backend errors, empty retrieval, abstentions, unknown
URLs) never abort a run; they are flagged and score 0 downstream.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import attribution as attr
from .attribution import AttributedAnswer
from .backends import ABSTENTION, BackendError, GeneratorRequest
from .corpus import Corpus
from .sparse_index import InvertedIndex, RetrievalResult, build_text_index, search, similarity

ARCH_RTR = "rtr"
ARCH_POSTHOC = "posthoc"
ARCH_LLM_AS_RETRIEVER = "llm_as_retriever"
ARCHITECTURES = frozenset({ARCH_RTR, ARCH_POSTHOC, ARCH_LLM_AS_RETRIEVER})

RETRIEVAL_BM25 = "bm25"
RETRIEVAL_DENSE = "dense"
RETRIEVAL_MODES = frozenset({RETRIEVAL_BM25, RETRIEVAL_DENSE})

ATTR_TOP1 = "top1"
ATTR_CONSTRAINED = "top_k_constrained"
ATTR_AUTOAIS = "autoais"
ATTRIBUTION_MODES = frozenset({ATTR_TOP1, ATTR_CONSTRAINED, ATTR_AUTOAIS})

EXEMPLARS_RANDOM = "nq64_random"
EXEMPLARS_BM25 = "nq_full_bm25"
EXEMPLAR_POLICIES = frozenset({EXEMPLARS_RANDOM, EXEMPLARS_BM25})

_SELECTION_OF = {
    ATTR_TOP1: attr.SELECTION_TOP1,
    ATTR_CONSTRAINED: attr.SELECTION_ANSWER_CONSTRAINED,
    ATTR_AUTOAIS: attr.SELECTION_AUTOAIS_RERANK,
}


class PipelineError(ValueError):
    """Raised for invalid configurations or missing run inputs."""


@dataclass(frozen=True)
class PipelineConfig:
    architecture: str
    retrieval: str = RETRIEVAL_BM25
    k: int = 50
    passages_to_generator: int = 1  # P; retrieve-then-read only
    attribution: str = ATTR_TOP1  # A
    exemplar_policy: str = EXEMPLARS_RANDOM
    exemplar_count: int = 64
    seed: int = 0
    rerank: bool = False
    train_passages: int | None = None  # T; recorded for reporting, not executed

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise PipelineError(f"unknown architecture {self.architecture!r}")
        if self.retrieval not in RETRIEVAL_MODES:
            raise PipelineError(f"unknown retrieval mode {self.retrieval!r}")
        if self.attribution not in ATTRIBUTION_MODES:
            raise PipelineError(f"unknown attribution mode {self.attribution!r}")
        if self.exemplar_policy not in EXEMPLAR_POLICIES:
            raise PipelineError(f"unknown exemplar policy {self.exemplar_policy!r}")
        if self.k < 1:
            raise PipelineError(f"k must be >= 1, got {self.k}")
        if self.architecture == ARCH_RTR and not 1 <= self.passages_to_generator <= self.k:
            raise PipelineError(
                f"P must satisfy 1 <= P <= k, got P={self.passages_to_generator}, k={self.k}"
            )

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "retrieval": self.retrieval,
            "k": self.k,
            "passages_to_generator": self.passages_to_generator,
            "attribution": self.attribution,
            "exemplar_policy": self.exemplar_policy,
            "exemplar_count": self.exemplar_count,
            "seed": self.seed,
            "rerank": self.rerank,
            "train_passages": self.train_passages,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return cls(**data)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class Backends:
    """The model backends a run may need; unused slots may stay None."""

    generator: object | None = None
    entailment: object | None = None
    embedder: object | None = None
    reranker: object | None = None


@dataclass
class SystemRun:
    name: str
    config: PipelineConfig
    outputs: dict[str, AttributedAnswer] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Dense retrieval (exact inner product at desk scale)
# ---------------------------------------------------------------------------


@dataclass
class DenseIndex:
    passage_ids: list[str]
    matrix: np.ndarray  # one row per passage
    embedder: object


def build_dense_index(corpus: Corpus, embedder) -> DenseIndex:
    vectors = embedder.embed([p.text for p in corpus])
    return DenseIndex(
        passage_ids=[p.id for p in corpus],
        matrix=np.asarray(vectors, dtype=np.float64),
        embedder=embedder,
    )


def dense_search(index: DenseIndex, query: str, k: int) -> RetrievalResult:
    """Top-k passages by inner product with the query embedding; exact
    brute-force scoring, ties break by ascending passage id."""
    if k < 1:
        raise PipelineError(f"k must be >= 1, got {k}")
    query_vector = np.asarray(index.embedder.embed([query])[0], dtype=np.float64)
    scores = index.matrix @ query_vector
    ranked = sorted(
        zip(index.passage_ids, (float(s) for s in scores)),
        key=lambda item: (-item[1], item[0]),
    )
    return RetrievalResult(entries=ranked[:k], query=query)


def apply_rerank(backend, question: str, result: RetrievalResult, corpus: Corpus) -> RetrievalResult:
    """Reorder a retrieval result via the reranker backend. The wire format
    returns order only, so entries carry rank-derived scores."""
    if not result.entries:
        return result
    passages = [(pid, corpus.by_id[pid].title, corpus.by_id[pid].text) for pid, _ in result.entries]
    ids = backend.rerank(question, passages)
    if sorted(ids) != sorted(pid for pid, _ in result.entries):
        raise PipelineError("reranker changed the candidate id multiset")
    n = len(ids)
    return RetrievalResult(
        entries=[(pid, float(n - i)) for i, pid in enumerate(ids)], query=result.query
    )


# ---------------------------------------------------------------------------
# Exemplar selection
# ---------------------------------------------------------------------------


def build_exemplar_index(train_set: Sequence[tuple[str, str]]) -> InvertedIndex:
    """BM25 index over training-question texts, keyed by position."""
    if not train_set:
        raise PipelineError("train_set must be non-empty")
    width = len(str(len(train_set) - 1))
    return build_text_index([(str(i).zfill(width), q) for i, (q, _) in enumerate(train_set)])


def select_exemplars(
    policy: str,
    question: str,
    train_set: Sequence[tuple[str, str]],
    *,
    count: int = 64,
    seed: int = 0,
    train_index: InvertedIndex | None = None,
) -> list[tuple[str, str]]:
    """Prompt exemplars: either a seeded random sample fixed for the whole
    run, or the per-question most similar training questions by BM25."""
    if not train_set:
        raise PipelineError("train_set must be non-empty")
    take = min(count, len(train_set))
    if policy == EXEMPLARS_RANDOM:
        rng = random.Random(seed)
        return [train_set[i] for i in rng.sample(range(len(train_set)), take)]
    if policy == EXEMPLARS_BM25:
        index = train_index if train_index is not None else build_exemplar_index(train_set)
        ranked = similarity(index, question, take)
        return [train_set[int(pid)] for pid, _ in ranked]
    raise PipelineError(f"unknown exemplar policy {policy!r}")


# ---------------------------------------------------------------------------
# Per-question pipeline runs
# ---------------------------------------------------------------------------


def _retrieve(
    config: PipelineConfig,
    query: str,
    sparse: InvertedIndex | None,
    dense: DenseIndex | None,
) -> RetrievalResult:
    if config.retrieval == RETRIEVAL_BM25:
        if sparse is None:
            raise PipelineError("bm25 retrieval requires a sparse index")
        return search(sparse, query, config.k)
    if dense is None:
        raise PipelineError("dense retrieval requires a dense index")
    return dense_search(dense, query, config.k)


def _failure(config: PipelineConfig, question_id: str, question: str, reason: str,
             *, answer: str = "", url: str | None = None) -> AttributedAnswer:
    mode = attr.SELECTION_URL_BM25 if config.architecture == ARCH_LLM_AS_RETRIEVER \
        else _SELECTION_OF[config.attribution]
    return AttributedAnswer(
        question_id=question_id,
        answer=answer,
        passage_id=None,
        selection_mode=mode,
        answer_found_in_passage=False,
        question=question,
        url=url,
        failure=reason,
    )


def _attribute(
    config: PipelineConfig,
    result: RetrievalResult,
    question: str,
    answer: str,
    corpus: Corpus,
    backends: Backends,
) -> tuple[str, bool, str]:
    """Returns (passage_id, found, selection_mode) for ranked candidates."""
    if config.attribution == ATTR_TOP1:
        return attr.select_top1(result), True, attr.SELECTION_TOP1
    if config.attribution == ATTR_CONSTRAINED:
        pid, found = attr.select_answer_constrained(result, answer, corpus)
        return pid, found, attr.SELECTION_ANSWER_CONSTRAINED
    if backends.entailment is None:
        raise PipelineError("autoais attribution requires an entailment backend")
    pid = attr.select_autoais_rerank(result, question, answer, backends.entailment, corpus)
    return pid, True, attr.SELECTION_AUTOAIS_RERANK


def run_rtr(
    config: PipelineConfig,
    question_id: str,
    question: str,
    corpus: Corpus,
    backends: Backends,
    *,
    sparse: InvertedIndex | None = None,
    dense: DenseIndex | None = None,
) -> AttributedAnswer:
    result = _retrieve(config, question, sparse, dense)
    if not result.entries:
        return _failure(config, question_id, question, "empty retrieval")
    if config.rerank:
        if backends.reranker is None:
            raise PipelineError("rerank=True requires a reranker backend")
        result = apply_rerank(backends.reranker, question, result, corpus)
    generator_input = result.entries[: config.passages_to_generator]
    request = GeneratorRequest(
        question=question,
        passages=tuple(
            (corpus.by_id[pid].title, corpus.by_id[pid].text) for pid, _ in generator_input
        ),
    )
    answer = backends.generator.generate(request).answer
    if not answer or answer == ABSTENTION:
        return _failure(config, question_id, question, "generator abstained")
    pid, found, mode = _attribute(config, result, question, answer, corpus, backends)
    return AttributedAnswer(
        question_id=question_id,
        answer=answer,
        passage_id=pid,
        selection_mode=mode,
        answer_found_in_passage=found,
        question=question,
    )


def run_posthoc(
    config: PipelineConfig,
    question_id: str,
    question: str,
    corpus: Corpus,
    backends: Backends,
    exemplars: Sequence[tuple[str, str]],
    *,
    sparse: InvertedIndex | None = None,
    dense: DenseIndex | None = None,
) -> AttributedAnswer:
    request = GeneratorRequest(question=question, exemplars=tuple(exemplars))
    answer = backends.generator.generate(request).answer
    if not answer or answer == ABSTENTION:
        return _failure(config, question_id, question, "generator abstained")
    result = _retrieve(config, f"{question} {answer}", sparse, dense)
    if not result.entries:
        return _failure(config, question_id, question, "empty retrieval", answer=answer)
    pid, found, mode = _attribute(config, result, question, answer, corpus, backends)
    return AttributedAnswer(
        question_id=question_id,
        answer=answer,
        passage_id=pid,
        selection_mode=mode,
        answer_found_in_passage=found,
        question=question,
    )


def run_llm_as_retriever(
    config: PipelineConfig,
    question_id: str,
    question: str,
    corpus: Corpus,
    backends: Backends,
    *,
    sparse: InvertedIndex | None = None,
) -> AttributedAnswer:
    if sparse is None:
        raise PipelineError("url attribution requires the sparse index")
    response = backends.generator.generate(GeneratorRequest(question=question))
    answer = response.answer
    if not answer or answer == ABSTENTION:
        return _failure(config, question_id, question, "generator abstained")
    if not response.url:
        return _failure(config, question_id, question, "generator emitted no url", answer=answer)
    pid, found = attr.select_from_url(corpus, sparse, response.url, question, answer)
    if not found:
        return _failure(
            config, question_id, question, "generated url not in corpus",
            answer=answer, url=response.url,
        )
    return AttributedAnswer(
        question_id=question_id,
        answer=answer,
        passage_id=pid,
        selection_mode=attr.SELECTION_URL_BM25,
        answer_found_in_passage=True,
        question=question,
        url=response.url,
    )


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------


def execute_run(
    name: str,
    config: PipelineConfig,
    questions: Sequence[tuple[str, str]],
    corpus: Corpus,
    backends: Backends,
    *,
    sparse: InvertedIndex | None = None,
    dense: DenseIndex | None = None,
    train_set: Sequence[tuple[str, str]] = (),
    jobs: int = 1,
) -> SystemRun:
    """Apply the configured architecture to every question.

    Backend and retrieval failures are recorded per question; the run always
    completes. Deterministic given mocks and seeds.
    """
    if corpus is None or len(corpus) == 0:
        raise PipelineError("execute_run requires a non-empty corpus")
    if config.retrieval == RETRIEVAL_DENSE and dense is None:
        if backends.embedder is None:
            raise PipelineError("dense retrieval requires an embedder backend")
        dense = build_dense_index(corpus, backends.embedder)
    if backends.generator is None:
        raise PipelineError("every architecture requires a generator backend")

    shared_exemplars: list[tuple[str, str]] = []
    exemplar_index: InvertedIndex | None = None
    if config.architecture == ARCH_POSTHOC:
        if not train_set:
            raise PipelineError("post-hoc runs require a non-empty train_set")
        if config.exemplar_policy == EXEMPLARS_RANDOM:
            shared_exemplars = select_exemplars(
                config.exemplar_policy, "", train_set,
                count=config.exemplar_count, seed=config.seed,
            )
        else:
            exemplar_index = build_exemplar_index(train_set)

    def one(item: tuple[str, str]) -> AttributedAnswer:
        qid, question = item
        try:
            if config.architecture == ARCH_RTR:
                return run_rtr(config, qid, question, corpus, backends, sparse=sparse, dense=dense)
            if config.architecture == ARCH_POSTHOC:
                if config.exemplar_policy == EXEMPLARS_RANDOM:
                    exemplars = shared_exemplars
                else:
                    exemplars = select_exemplars(
                        config.exemplar_policy, question, train_set,
                        count=config.exemplar_count, seed=config.seed,
                        train_index=exemplar_index,
                    )
                return run_posthoc(
                    config, qid, question, corpus, backends, exemplars,
                    sparse=sparse, dense=dense,
                )
            return run_llm_as_retriever(config, qid, question, corpus, backends, sparse=sparse)
        except BackendError as exc:
            return _failure(config, qid, question, f"backend error: {exc}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(one, questions))
    else:
        outputs = [one(item) for item in questions]
    run = SystemRun(name=name, config=config)
    for output in outputs:
        if output.question_id in run.outputs:
            raise PipelineError(f"duplicate question id {output.question_id!r}")
        run.outputs[output.question_id] = output
    return run


# ---------------------------------------------------------------------------
# Run files
# ---------------------------------------------------------------------------


def write_run(run: SystemRun, path: str | Path) -> None:
    """Run file: a metadata header line, then one output per line sorted by
    question id (so identical runs serialize to identical bytes)."""
    with open(path, "w", encoding="utf-8") as handle:
        header = {
            "run": run.name,
            "config": run.config.to_dict(),
            "config_hash": run.config.config_hash(),
        }
        handle.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")
        for qid in sorted(run.outputs):
            output = run.outputs[qid]
            record: dict = {
                "question_id": output.question_id,
                "question": output.question,
                "answer": output.answer,
                "selection_mode": output.selection_mode,
                "answer_found_in_passage": output.answer_found_in_passage,
            }
            if output.passage_id is not None:
                record["passage_id"] = output.passage_id
            if output.url is not None:
                record["url"] = output.url
            if output.failure is not None:
                record["failure"] = output.failure
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def read_run(path: str | Path) -> SystemRun:
    with open(path, encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise PipelineError(f"{path}: empty run file")
    header = json.loads(lines[0])
    if "run" not in header or "config" not in header:
        raise PipelineError(f"{path}: missing run metadata header")
    run = SystemRun(name=header["run"], config=PipelineConfig.from_dict(header["config"]))
    for lineno, line in enumerate(lines[1:], start=2):
        obj = json.loads(line)
        qid = obj["question_id"]
        if qid in run.outputs:
            raise PipelineError(f"{path}: duplicate question id {qid!r} at line {lineno}")
        run.outputs[qid] = AttributedAnswer(
            question_id=qid,
            answer=obj["answer"],
            passage_id=obj.get("passage_id"),
            selection_mode=obj["selection_mode"],
            answer_found_in_passage=obj["answer_found_in_passage"],
            question=obj.get("question", ""),
            url=obj.get("url"),
            failure=obj.get("failure"),
        )
    return run


def load_questions(path: str | Path) -> list[tuple[str, str]]:
    """Questions JSONL: {"question_id": ..., "question": ...} per line."""
    questions = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "question_id" not in obj or "question" not in obj:
                raise PipelineError(f"line {lineno}: expected question_id and question")
            questions.append((str(obj["question_id"]), str(obj["question"])))
    return questions


def load_qa_pairs(path: str | Path) -> list[tuple[str, str]]:
    """Training pairs JSONL: {"question": ..., "answer": ...} per line."""
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "question" not in obj or "answer" not in obj:
                raise PipelineError(f"line {lineno}: expected question and answer")
            pairs.append((str(obj["question"]), str(obj["answer"])))
    return pairs
