from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from attriqa.corpus import Corpus, Passage


def make_corpus(rows: list[tuple[str, str, str, str]]) -> Corpus:
    """Rows of (id, url, title, text)."""
    return Corpus([Passage(id=i, url=u, title=t, text=x) for i, u, t, x in rows])


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


@pytest.fixture
def tiny_corpus() -> Corpus:
    return make_corpus(
        [
            ("p1", "http://wiki/ice", "Ice sheet", "the antarctic ice sheet is the largest mass"),
            ("p2", "http://wiki/ice", "Ice sheet", "greenland holds a large ice sheet as well"),
            ("p3", "http://wiki/tea", "Tea party", "the tea came from the east india company"),
            ("p4", "http://wiki/tea", "Tea party", "protesters destroyed a shipment of tea in boston"),
            ("p5", "http://wiki/marvel", "Marvel shows", "daredevil premiered before jessica jones on netflix"),
        ]
    )


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        self.server.requests.append((self.path, json.loads(body) if body else None))
        if self.server.responses:
            status, payload = self.server.responses.pop(0)
        else:
            status, payload = self.server.default_response
        raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


class StubService:
    """Scripted HTTP backend: pop responses in order, record requests."""

    def __init__(self):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.requests = []
        self.server.responses = []
        self.server.default_response = (200, {})
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.server.server_address[1]}"

    @property
    def requests(self):
        return self.server.requests

    def enqueue(self, status: int, payload) -> None:
        self.server.responses.append((status, payload))

    def set_default(self, status: int, payload) -> None:
        self.server.default_response = (status, payload)

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_service():
    service = StubService()
    yield service
    service.close()
