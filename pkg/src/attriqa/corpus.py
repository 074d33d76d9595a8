"""Paragraph corpus: the fixed set of passages answers can be attributed to.

The corpus arrives pre-segmented as JSONL, one passage per line with keys
exactly {"id", "url", "title", "text"}. After loading it is immutable and
indexed both by passage id and by (normalized) source URL.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import urlsplit, urlunsplit


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


PASSAGE_FIELDS = ("id", "url", "title", "text")


@dataclass(frozen=True)
class Passage:
    id: str
    url: str
    title: str
    text: str


def normalize_url(url: str) -> str:
    """Canonical URL form used for all URL joins.

    Trims whitespace, lowercases scheme and host, strips trailing "/".
    Idempotent, so it is safe to apply at both ingest and lookup.
    """
    url = url.strip()
    parts = urlsplit(url)
    if parts.scheme:
        url = urlunsplit(
            (parts.scheme.lower(), parts.netloc.lower(), parts.path, parts.query, parts.fragment)
        )
    return url.rstrip("/")


class Corpus:
    """Immutable collection of passages with id and URL lookup maps."""

    def __init__(self, passages: Iterable[Passage]):
        self.passages: list[Passage] = []
        self.by_id: dict[str, Passage] = {}
        self.by_url: dict[str, list[str]] = {}
        for passage in passages:
            if not passage.text.strip():
                raise CorpusError(f"passage {passage.id!r} has empty text")
            if passage.id in self.by_id:
                raise CorpusError(f"duplicate passage id {passage.id!r}")
            self.passages.append(passage)
            self.by_id[passage.id] = passage
            self.by_url.setdefault(normalize_url(passage.url), []).append(passage.id)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self.by_id


def _parse_line(line: str, lineno: int) -> Passage:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    if set(obj) != set(PASSAGE_FIELDS):
        raise CorpusError(
            f"line {lineno}: keys must be exactly {set(PASSAGE_FIELDS)}, got {set(obj)}"
        )
    for field in PASSAGE_FIELDS:
        if not isinstance(obj[field], str):
            raise CorpusError(f"line {lineno}: field {field!r} must be a string")
    if not obj["text"].strip():
        raise CorpusError(f"line {lineno}: passage {obj['id']!r} has empty text")
    return Passage(
        id=obj["id"], url=normalize_url(obj["url"]), title=obj["title"], text=obj["text"]
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load a JSONL corpus file, building both lookup maps.

    Fails loudly: malformed lines name their line number, duplicate ids name
    the id, and empty-text passages are rejected rather than dropped.
    """
    passages = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            passages.append(_parse_line(line, lineno))
    return Corpus(passages)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to JSONL in passage order (load/save round-trips)."""
    with open(path, "w", encoding="utf-8") as handle:
        for p in corpus.passages:
            handle.write(
                json.dumps(
                    {"id": p.id, "url": p.url, "title": p.title, "text": p.text},
                    ensure_ascii=False,
                )
                + "\n"
            )


def passages_for_url(corpus: Corpus, url: str) -> list[Passage]:
    """All passages of a page in document order; empty list for unknown URLs."""
    ids = corpus.by_url.get(normalize_url(url), [])
    return [corpus.by_id[pid] for pid in ids]
