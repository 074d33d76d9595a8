"""Attribution selection: picking the single evidence passage for an answer
from a ranked candidate list (or from a generated page URL)."""

from __future__ import annotations

from dataclasses import dataclass

from .backends import EntailmentQuery, render_hypothesis, render_premise
from .corpus import Corpus, passages_for_url
from .metrics import normalize_answer
from .sparse_index import InvertedIndex, RetrievalResult, bm25_score, tokenize

SELECTION_TOP1 = "top1"
SELECTION_ANSWER_CONSTRAINED = "answer_constrained"
SELECTION_AUTOAIS_RERANK = "autoais_rerank"
SELECTION_URL_BM25 = "url_bm25"

SELECTION_MODES = frozenset(
    {SELECTION_TOP1, SELECTION_ANSWER_CONSTRAINED, SELECTION_AUTOAIS_RERANK, SELECTION_URL_BM25}
)


class AttributionError(ValueError):
    """Raised when a selector gets an unusable candidate set."""


@dataclass
class AttributedAnswer:
    """One system output: the answer string plus its evidence passage.

    passage_id is None only for flagged failures (e.g. a generated URL that
    is not in the corpus). answer_found_in_passage records whether the
    answer-constrained selector actually matched, or fell back to top-1.
    """

    question_id: str
    answer: str
    passage_id: str | None
    selection_mode: str
    answer_found_in_passage: bool
    question: str = ""
    url: str | None = None
    failure: str | None = None

    def __post_init__(self) -> None:
        if self.selection_mode not in SELECTION_MODES:
            raise ValueError(f"unknown selection mode {self.selection_mode!r}")


def answer_in_text(answer: str, text: str) -> bool:
    """Token-boundary containment after Exact Match normalization, so "2016"
    matches "in 2016 and 2018" but not "20163". Empty normalized answers
    never match."""
    needle = normalize_answer(answer)
    if not needle:
        return False
    return f" {needle} " in f" {normalize_answer(text)} "


def select_top1(result: RetrievalResult) -> str:
    """The top-ranked candidate's passage id."""
    if not result.entries:
        raise AttributionError("cannot select from an empty result")
    return result.entries[0][0]


def select_answer_constrained(
    result: RetrievalResult, answer: str, corpus: Corpus
) -> tuple[str, bool]:
    """Highest-ranked candidate containing the answer; falls back to top-1
    with found=False when no candidate contains it."""
    if not result.entries:
        raise AttributionError("cannot select from an empty result")
    if not answer:
        raise AttributionError("answer must be non-empty")
    for pid, _ in result.entries:
        if answer_in_text(answer, corpus.by_id[pid].text):
            return pid, True
    return result.entries[0][0], False


def select_autoais_rerank(
    result: RetrievalResult, question: str, answer: str, scorer, corpus: Corpus
) -> str:
    """Candidate with the highest entailment score for the rendered
    question+answer; ties go to the better retrieval rank."""
    if not result.entries:
        raise AttributionError("cannot select from an empty result")
    hypothesis = render_hypothesis(question, answer)
    best_pid = None
    best_score = -1.0
    for pid, _ in result.entries:
        passage = corpus.by_id[pid]
        score = scorer.entail(
            EntailmentQuery(premise=render_premise(passage.title, passage.text), hypothesis=hypothesis)
        )
        if score > best_score:
            best_pid, best_score = pid, score
    assert best_pid is not None
    return best_pid


def select_from_url(
    corpus: Corpus, index: InvertedIndex, url: str, question: str, answer: str
) -> tuple[str | None, bool]:
    """Best passage of the given page by BM25 against "question answer";
    (None, False) when the page has no passages. Ties keep document order."""
    passages = passages_for_url(corpus, url)
    if not passages:
        return None, False
    query_tokens = tokenize(f"{question} {answer}")
    best_pid = None
    best_score = -1.0
    for passage in passages:
        score = bm25_score(index, query_tokens, index.ordinals[passage.id])
        if score > best_score:
            best_pid, best_score = passage.id, score
    return best_pid, True
