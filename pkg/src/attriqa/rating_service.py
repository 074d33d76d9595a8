"""Rating collection service.

Serves rating tasks (question, system answer, attribution passage) to human
raters over HTTP, enforces the two-question protocol (the support question
presupposes interpretability), and persists every judgment to an append-only
JSONL log that exports directly into the metrics ratings format.

Assignment balances rating counts across items so every item converges on
the target pool size (5 raters by default) as fast as possible.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .corpus import Corpus
from .metrics import RatingRecord
from .pipelines import SystemRun

logger = logging.getLogger(__name__)

DEFAULT_TARGET_PER_ITEM = 5


class RatingServiceError(ValueError):
    """Base class for rating-service failures."""


class UnknownRaterError(RatingServiceError):
    pass


class UnknownItemError(RatingServiceError):
    pass


class DuplicateRatingError(RatingServiceError):
    """The same rater already rated this item."""


class RatingValidationError(RatingServiceError):
    """The judgment violates the two-question protocol."""


@dataclass(frozen=True)
class RatingTask:
    item_id: str
    question: str
    answer: str
    passage_title: str
    passage_text: str
    passage_url: str
    system: str
    question_id: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "answer": self.answer,
            "passage_title": self.passage_title,
            "passage_text": self.passage_text,
            "passage_url": self.passage_url,
            "system": self.system,
            "question_id": self.question_id,
        }


def load_tasks(run: SystemRun, corpus: Corpus) -> tuple[list[RatingTask], list[str]]:
    """One task per run output that has a passage; flagged failures are
    excluded and reported back as the second element."""
    if not run.outputs:
        raise RatingServiceError("run has no outputs to rate")
    tasks: list[RatingTask] = []
    excluded: list[str] = []
    for qid in sorted(run.outputs):
        output = run.outputs[qid]
        if output.failure is not None or output.passage_id is None:
            excluded.append(qid)
            continue
        passage = corpus.by_id.get(output.passage_id)
        if passage is None:
            raise RatingServiceError(f"passage id {output.passage_id!r} not in corpus")
        tasks.append(
            RatingTask(
                item_id=f"{run.name}::{qid}",
                question=output.question,
                answer=output.answer,
                passage_title=passage.title,
                passage_text=passage.text,
                passage_url=passage.url,
                system=run.name,
                question_id=qid,
            )
        )
    if len({t.item_id for t in tasks}) != len(tasks):
        raise RatingServiceError("duplicate (system, question) items in run")
    return tasks, excluded


class RatingStore:
    """Task pool plus the append-only rating log.

    Submissions are serialized through one lock/writer; the log file is
    replayed on startup so a restarted service resumes where it stopped.
    """

    def __init__(
        self,
        tasks: list[RatingTask],
        log_path: str | Path,
        *,
        target_per_item: int = DEFAULT_TARGET_PER_ITEM,
    ):
        self.tasks = {task.item_id: task for task in tasks}
        self.target_per_item = target_per_item
        self._ratings: dict[str, dict[str, tuple[bool, bool]]] = {t: {} for t in self.tasks}
        self._raters: set[str] = set()
        self._lock = threading.Lock()
        self._log_path = Path(log_path)
        self._replay_log()
        self._log = open(self._log_path, "a", encoding="utf-8")

    def _replay_log(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                obj = json.loads(line)
                item_id = obj.get("item_id")
                if item_id not in self._ratings:
                    logger.warning("log record for unknown item %r ignored", item_id)
                    continue
                rater = str(obj["rater_id"])
                self._raters.add(rater)
                self._ratings[item_id][rater] = (bool(obj["interpretable"]), bool(obj["supported"]))

    def register(self, rater_id: str) -> None:
        if not rater_id:
            raise RatingServiceError("rater id must be non-empty")
        with self._lock:
            self._raters.add(rater_id)

    def next_item(self, rater_id: str) -> RatingTask | None:
        """The unrated item with the fewest ratings so far (ties by item id);
        None once this rater has rated everything."""
        with self._lock:
            if rater_id not in self._raters:
                raise UnknownRaterError(f"unknown rater {rater_id!r}")
            candidates = [
                (len(raters), item_id)
                for item_id, raters in self._ratings.items()
                if rater_id not in raters
            ]
            if not candidates:
                return None
            _, item_id = min(candidates)
            return self.tasks[item_id]

    def submit(self, rater_id: str, item_id: str, interpretable: bool, supported: bool) -> RatingRecord:
        if not rater_id:
            raise RatingServiceError("rater id must be non-empty")
        if supported and not interpretable:
            raise RatingValidationError("supported=true requires interpretable=true")
        with self._lock:
            task = self.tasks.get(item_id)
            if task is None:
                raise UnknownItemError(f"unknown item {item_id!r}")
            if rater_id in self._ratings[item_id]:
                raise DuplicateRatingError(f"rater {rater_id!r} already rated {item_id!r}")
            self._raters.add(rater_id)
            self._ratings[item_id][rater_id] = (interpretable, supported)
            self._log.write(
                json.dumps(
                    {
                        "item_id": item_id,
                        "question_id": task.question_id,
                        "system": task.system,
                        "rater_id": rater_id,
                        "interpretable": interpretable,
                        "supported": supported,
                        "ts": time.time(),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            self._log.flush()
        return RatingRecord(
            question_id=task.question_id,
            rater_id=rater_id,
            interpretable=interpretable,
            supported=supported,
            system=task.system,
        )

    def export_records(self) -> list[RatingRecord]:
        """All ratings in stable (item_id, rater_id) order, metrics-ready."""
        with self._lock:
            records = []
            for item_id in sorted(self._ratings):
                task = self.tasks[item_id]
                for rater_id in sorted(self._ratings[item_id]):
                    interpretable, supported = self._ratings[item_id][rater_id]
                    records.append(
                        RatingRecord(
                            question_id=task.question_id,
                            rater_id=rater_id,
                            interpretable=interpretable,
                            supported=supported,
                            system=task.system,
                        )
                    )
            return records

    def export_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "question_id": r.question_id,
                    "system": r.system,
                    "rater_id": r.rater_id,
                    "interpretable": r.interpretable,
                    "supported": r.supported,
                },
                ensure_ascii=False,
            )
            for r in self.export_records()
        ]
        return "".join(line + "\n" for line in lines)

    def progress(self) -> dict:
        with self._lock:
            completed = sum(
                min(len(raters), self.target_per_item) for raters in self._ratings.values()
            )
            return {
                "items": len(self.tasks),
                "target_ratings": len(self.tasks) * self.target_per_item,
                "completed": completed,
            }

    def close(self) -> None:
        with self._lock:
            if not self._log.closed:
                self._log.flush()
                self._log.close()


class RatingServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, store: RatingStore, static_dir: Path | None):
        super().__init__(address, _Handler)
        self.store = store
        self.static_dir = static_dir


class _Handler(BaseHTTPRequestHandler):
    server: RatingServer

    def log_message(self, fmt, *args):  # route access logs away from stderr
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload: dict | None) -> None:
        body = b"" if payload is None else json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        if body:
            self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def do_GET(self) -> None:
        parts = urlsplit(self.path)
        if parts.path == "/api/next":
            rater = parse_qs(parts.query).get("rater", [""])[0]
            if not rater:
                self._send_json(400, {"error": "missing rater parameter"})
                return
            self.server.store.register(rater)
            task = self.server.store.next_item(rater)
            if task is None:
                self._send_json(204, None)
            else:
                self._send_json(200, task.to_dict())
            return
        if parts.path == "/api/progress":
            self._send_json(200, self.server.store.progress())
            return
        if parts.path == "/api/export":
            body = self.server.store.export_jsonl().encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/jsonl; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        self._serve_static(parts.path)

    def do_POST(self) -> None:
        if urlsplit(self.path).path != "/api/rating":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length))
            rater = str(payload["rater"])
            item_id = str(payload["item_id"])
            interpretable = bool(payload["interpretable"])
            supported = bool(payload["supported"])
        except (ValueError, KeyError, TypeError):
            self._send_json(400, {"error": "malformed rating payload"})
            return
        try:
            self.server.store.submit(rater, item_id, interpretable, supported)
        except DuplicateRatingError as exc:
            self._send_json(409, {"error": str(exc)})
            return
        except (RatingValidationError, UnknownItemError, RatingServiceError) as exc:
            self._send_json(422, {"error": str(exc)})
            return
        self._send_json(200, {"status": "ok"})

    def _serve_static(self, path: str) -> None:
        static_dir = self.server.static_dir
        if static_dir is None:
            self._send_json(404, {"error": "not found"})
            return
        relative = path.lstrip("/") or "index.html"
        target = (static_dir / relative).resolve()
        if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def create_server(
    store: RatingStore, port: int, *, host: str = "127.0.0.1", static_dir: str | Path | None = None
) -> RatingServer:
    """Bind the rating service; raises OSError if the port is taken."""
    directory = Path(static_dir) if static_dir else None
    return RatingServer((host, port), store, directory)
