from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from simrag.corpus import DocumentFormat, SourceCategory
from simrag.engine import EngineConfig, RagEngine

FIXTURE_CORPUS = Path(__file__).parent / "fixtures" / "corpus"

FIXTURE_DOCS = [
    ("wiki.md", SourceCategory.DOCUMENTATION),
    ("api_reference.md", SourceCategory.API_REFERENCE),
    ("droplet_example.xml", SourceCategory.INPUT_EXAMPLE),
    ("inflow_example.xml", SourceCategory.INPUT_EXAMPLE),
    ("project_report.txt", SourceCategory.PROJECT_REPORT),
    ("sph_literature.md", SourceCategory.DOMAIN_LITERATURE),
]


@pytest.fixture
def fixture_corpus_dir() -> Path:
    return FIXTURE_CORPUS


def make_engine(data_dir: Path, **overrides) -> RagEngine:
    config = EngineConfig(data_dir=data_dir, **overrides)
    return RagEngine(config)


def ingest_fixture_corpus(engine: RagEngine) -> None:
    for name, category in FIXTURE_DOCS:
        engine.ingest(FIXTURE_CORPUS / name, category)


@pytest.fixture
def empty_engine(tmp_path: Path) -> RagEngine:
    return make_engine(tmp_path / "data")


@pytest.fixture
def engine(tmp_path: Path) -> RagEngine:
    eng = make_engine(tmp_path / "data")
    ingest_fixture_corpus(eng)
    return eng


class ScriptedHandler(BaseHTTPRequestHandler):
    """Replays a scripted list of (status, body) responses and records
    every request."""

    script: list[tuple[int, dict]] = []
    requests: list[dict] = []

    def _serve(self):
        body_len = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(body_len) if body_len else b""
        type(self).requests.append(
            {
                "method": self.command,
                "path": self.path,
                "body": json.loads(raw) if raw else None,
            }
        )
        if type(self).script:
            status, payload = type(self).script.pop(0)
        else:
            status, payload = 200, {}
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    do_GET = _serve
    do_POST = _serve

    def log_message(self, *args):  # silence test output
        pass


@pytest.fixture
def fake_server():
    """Scripted local HTTP server; yields (base_url, handler class)."""
    handler = type("Handler", (ScriptedHandler,), {"script": [], "requests": []})
    server = HTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", handler
    finally:
        server.shutdown()
        thread.join(timeout=5)
