"""From-scratch BM25 inverted index with deterministic top-k retrieval.

Scoring uses the non-negative idf variant

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))

and the usual saturated tf term tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl)),
so every score is >= 0 and a positive score implies term overlap. There is
no stemming and no stopword removal; defaults are k1=0.9, b=0.4.
"""

from __future__ import annotations

import math
import re
import struct
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

# Unicode alphanumerics only: \w minus underscore.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_MAGIC = b"ATQI"
_VERSION = 1


class SparseIndexError(ValueError):
    """Raised for invalid index construction or queries."""


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on any non-alphanumeric character."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class InvertedIndex:
    """Postings plus the per-document statistics BM25 needs.

    postings map each term to (passage ordinal, term frequency) pairs sorted
    by ordinal; ordinals follow corpus order and `passage_ids` maps them back
    to ids.
    """

    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    doc_count: int
    k1: float
    b: float
    passage_ids: list[str]
    ordinals: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if not self.ordinals:
            self.ordinals = {pid: i for i, pid in enumerate(self.passage_ids)}


@dataclass
class RetrievalResult:
    """Ranked (passage id, score) entries for one query.

    Scores are non-increasing, ties break by ascending passage id, and no id
    appears twice.
    """

    entries: list[tuple[str, float]]
    query: str

    def ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)


def _build(ids: Sequence[str], texts: Iterable[str], k1: float, b: float) -> InvertedIndex:
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for ordinal, text in enumerate(texts):
        tokens = tokenize(text)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((ordinal, tf))
    doc_count = len(doc_lengths)
    avg = sum(doc_lengths) / doc_count
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        doc_count=doc_count,
        k1=k1,
        b=b,
        passage_ids=list(ids),
    )


def build_index(corpus: Corpus, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    """Index a corpus; deterministic given the same passage order."""
    if len(corpus) == 0:
        raise SparseIndexError("cannot index an empty corpus")
    return _build([p.id for p in corpus], (p.text for p in corpus), k1, b)


def build_text_index(
    pairs: Sequence[tuple[str, str]], k1: float = DEFAULT_K1, b: float = DEFAULT_B
) -> InvertedIndex:
    """Index raw (id, text) pairs, e.g. training questions for similarity."""
    if not pairs:
        raise SparseIndexError("cannot index an empty collection")
    return _build([pid for pid, _ in pairs], (text for _, text in pairs), k1, b)


def _idf(index: InvertedIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    if df == 0:
        return 0.0
    return math.log(1.0 + (index.doc_count - df + 0.5) / (df + 0.5))


def _tf_of(index: InvertedIndex, term: str, ordinal: int) -> int:
    plist = index.postings.get(term)
    if not plist:
        return 0
    pos = bisect_left(plist, (ordinal, 0))
    if pos < len(plist) and plist[pos][0] == ordinal:
        return plist[pos][1]
    return 0


def bm25_score(index: InvertedIndex, query_tokens: Sequence[str], passage_ordinal: int) -> float:
    """Score one passage against the query tokens (each occurrence counts)."""
    if not 0 <= passage_ordinal < index.doc_count:
        raise SparseIndexError(f"ordinal {passage_ordinal} out of range")
    dl = index.doc_lengths[passage_ordinal]
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length)
    score = 0.0
    for term in query_tokens:
        tf = _tf_of(index, term, passage_ordinal)
        if tf == 0:
            continue
        score += _idf(index, term) * tf * (index.k1 + 1.0) / (tf + norm)
    return score


def _accumulate(index: InvertedIndex, query_tokens: Sequence[str]) -> dict[int, float]:
    """Per-ordinal score sums, accumulated in query-token order (matches
    bm25_score term for term, so the floats agree bitwise)."""
    scores: dict[int, float] = {}
    for term in query_tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = _idf(index, term)
        for ordinal, tf in plist:
            dl = index.doc_lengths[ordinal]
            norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length)
            contribution = idf * tf * (index.k1 + 1.0) / (tf + norm)
            scores[ordinal] = scores.get(ordinal, 0.0) + contribution
    return scores


def search(index: InvertedIndex, query: str, k: int) -> RetrievalResult:
    """Top-k passages by BM25 score.

    Zero-score passages are never returned (no term overlap is no evidence),
    so fewer than k entries may come back. Ties break by ascending id.
    """
    if k < 1:
        raise SparseIndexError(f"k must be >= 1, got {k}")
    tokens = tokenize(query)
    scores = _accumulate(index, tokens)
    ranked = sorted(
        ((index.passage_ids[ordinal], s) for ordinal, s in scores.items() if s > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return RetrievalResult(entries=ranked[:k], query=query)


def similarity(index: InvertedIndex, question: str, m: int) -> list[tuple[str, float]]:
    """Top-m indexed examples most similar to the question by BM25 score.

    Unlike search, candidates with zero overlap still rank (by id) so a full
    slate of exemplars comes back whenever m <= index size.
    """
    if m < 1:
        raise SparseIndexError(f"m must be >= 1, got {m}")
    tokens = tokenize(question)
    scores = _accumulate(index, tokens)
    ranked = sorted(
        ((pid, scores.get(ordinal, 0.0)) for ordinal, pid in enumerate(index.passage_ids)),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked[:m]


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Serialize to the internal binary format (versioned header + postings)."""
    with open(path, "wb") as out:
        out.write(_MAGIC)
        out.write(struct.pack(">H", _VERSION))
        out.write(struct.pack(">ddI", index.k1, index.b, index.doc_count))
        for pid in index.passage_ids:
            raw = pid.encode("utf-8")
            out.write(struct.pack(">I", len(raw)))
            out.write(raw)
        out.write(struct.pack(f">{index.doc_count}I", *index.doc_lengths))
        terms = sorted(index.postings)
        out.write(struct.pack(">I", len(terms)))
        for term in terms:
            raw = term.encode("utf-8")
            plist = index.postings[term]
            out.write(struct.pack(">I", len(raw)))
            out.write(raw)
            out.write(struct.pack(">I", len(plist)))
            out.write(struct.pack(f">{2 * len(plist)}I", *(v for pair in plist for v in pair)))


def load_index(path: str | Path) -> InvertedIndex:
    """Load an index written by save_index; round-trips exactly."""
    with open(path, "rb") as handle:
        data = handle.read()
    if data[:4] != _MAGIC:
        raise SparseIndexError(f"{path}: not an index file")
    (version,) = struct.unpack_from(">H", data, 4)
    if version != _VERSION:
        raise SparseIndexError(f"{path}: unsupported index version {version}")
    offset = 6
    k1, b, doc_count = struct.unpack_from(">ddI", data, offset)
    offset += struct.calcsize(">ddI")
    passage_ids = []
    for _ in range(doc_count):
        (size,) = struct.unpack_from(">I", data, offset)
        offset += 4
        passage_ids.append(data[offset : offset + size].decode("utf-8"))
        offset += size
    doc_lengths = list(struct.unpack_from(f">{doc_count}I", data, offset))
    offset += 4 * doc_count
    (term_count,) = struct.unpack_from(">I", data, offset)
    offset += 4
    postings: dict[str, list[tuple[int, int]]] = {}
    for _ in range(term_count):
        (size,) = struct.unpack_from(">I", data, offset)
        offset += 4
        term = data[offset : offset + size].decode("utf-8")
        offset += size
        (plen,) = struct.unpack_from(">I", data, offset)
        offset += 4
        flat = struct.unpack_from(f">{2 * plen}I", data, offset)
        offset += 8 * plen
        postings[term] = [(flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]
    return InvertedIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths) / doc_count,
        doc_count=doc_count,
        k1=k1,
        b=b,
        passage_ids=passage_ids,
    )
