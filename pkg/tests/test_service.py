"""HTTP facade: endpoints, error envelope, concurrency, atomicity."""

from __future__ import annotations

import sys
import threading
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from simrag.config import ServiceConfig
from simrag.engine import EngineConfig, RagEngine
from simrag.llm import ProviderConfig, ProviderKind
from simrag.refine import ValidatorConfig
from simrag.service import create_app
from tests.conftest import FIXTURE_CORPUS, FIXTURE_DOCS


def make_client(tmp_path, **engine_overrides):
    engine_config = EngineConfig(data_dir=tmp_path / "data", **engine_overrides)
    engine = RagEngine(engine_config)
    config = ServiceConfig(data_dir=tmp_path / "data", engine=engine_config)
    app = create_app(config, engine=engine)
    return TestClient(app), engine


def ingest_all(client):
    for name, category in FIXTURE_DOCS:
        response = client.post(
            "/api/ingest",
            json={"path": str(FIXTURE_CORPUS / name), "category": category.value},
        )
        assert response.status_code == 200, response.text


@pytest.fixture
def client(tmp_path):
    test_client, _ = make_client(tmp_path)
    ingest_all(test_client)
    return test_client


class TestHealth:
    def test_fresh_start(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        body = test_client.get("/api/health").json()
        assert body == {"status": "ok", "index_size": 0, "provider_kind": "stub"}

    def test_after_ingest(self, client):
        body = client.get("/api/health").json()
        assert body["index_size"] > 0


class TestIngest:
    def test_ingest_and_query(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        response = test_client.post(
            "/api/ingest",
            json={"path": str(FIXTURE_CORPUS / "wiki.md"), "category": "documentation"},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["chunk_count"] >= 1

        session = test_client.post("/api/sessions", json={}).json()
        message = test_client.post(
            f"/api/sessions/{session['session_id']}/messages",
            json={"prompt": "How do I define an inflow?"},
        ).json()
        assert message["citations"]
        assert all(c["doc_path"].endswith("wiki.md") for c in message["citations"])

    def test_bad_category(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        response = test_client.post(
            "/api/ingest", json={"path": "x", "category": "nonsense"}
        )
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "bad_category"

    def test_empty_file_422(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        empty = tmp_path / "empty.txt"
        empty.write_text("")
        response = test_client.post(
            "/api/ingest", json={"path": str(empty), "category": "documentation"}
        )
        assert response.status_code == 422
        assert response.json()["error"]["code"] == "empty_document"

    def test_binary_file_422(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        blob = tmp_path / "blob.bin"
        blob.write_bytes(bytes(range(128, 256)) * 50)
        response = test_client.post(
            "/api/ingest", json={"path": str(blob), "category": "documentation"}
        )
        assert response.status_code == 422

    def test_missing_file_404(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        response = test_client.post(
            "/api/ingest", json={"path": str(tmp_path / "nope"), "category": "documentation"}
        )
        assert response.status_code == 404

    def test_concurrent_ingests_one_wins(self, tmp_path, monkeypatch):
        test_client, engine = make_client(tmp_path)
        original = engine.ingest

        def slow_ingest(*args, **kwargs):
            time.sleep(0.4)
            return original(*args, **kwargs)

        monkeypatch.setattr(engine, "ingest", slow_ingest)
        statuses = []

        def post():
            response = test_client.post(
                "/api/ingest",
                json={"path": str(FIXTURE_CORPUS / "wiki.md"), "category": "documentation"},
            )
            statuses.append(response.status_code)

        threads = [threading.Thread(target=post) for _ in range(2)]
        for thread in threads:
            thread.start()
            time.sleep(0.05)
        for thread in threads:
            thread.join()
        assert sorted(statuses) == [200, 409]

    def test_read_your_writes(self, tmp_path):
        test_client, engine = make_client(tmp_path)
        response = test_client.post(
            "/api/ingest",
            json={"path": str(FIXTURE_CORPUS / "api_reference.md"), "category": "api-reference"},
        )
        assert response.status_code == 200
        # persisted before the response returned
        reloaded = RagEngine(EngineConfig(data_dir=tmp_path / "data"))
        assert len(reloaded.index) == len(engine.index) > 0


class TestSessions:
    def test_create_distinct(self, client):
        a = client.post("/api/sessions", json={}).json()["session_id"]
        b = client.post("/api/sessions", json={}).json()["session_id"]
        assert a != b

    def test_get_full_tree(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        tree = client.get(f"/api/sessions/{sid}").json()
        assert tree["session_id"] == sid
        assert "root" in tree["nodes"]

    def test_unknown_session_404(self, client):
        assert client.get("/api/sessions/missing").status_code == 404

    def test_branch_to_root(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        response = client.post(f"/api/sessions/{sid}/branch", json={"node_id": "root"})
        assert response.status_code == 200
        assert response.json()["active_leaf"] == "root"

    def test_branch_bogus_node_404(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        response = client.post(f"/api/sessions/{sid}/branch", json={"node_id": "zzz"})
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "unknown_node"


class TestMessages:
    def test_stub_embeds_headers_and_citations_resolve(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        body = client.post(
            f"/api/sessions/{sid}/messages",
            json={"prompt": "What do you know about Pasimodo?"},
        ).json()
        content = body["assistant_message"]["content"]
        citations = body["citations"]
        assert citations
        positions = []
        for citation in citations:
            header = f"[context:{citation['category']}] {citation['doc_path']}#{citation['ordinal']}"
            assert header in content
            positions.append(content.index(header))
        chunk = client.get(f"/api/chunks/{citations[0]['chunk_id']}")
        assert chunk.status_code == 200
        assert chunk.json()["id"] == citations[0]["chunk_id"]

    def test_empty_prompt_400(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        response = client.post(f"/api/sessions/{sid}/messages", json={"prompt": "  "})
        assert response.status_code == 400

    def test_unknown_session_404(self, client):
        response = client.post("/api/sessions/none/messages", json={"prompt": "hi"})
        assert response.status_code == 404

    def test_provider_down_502_session_unchanged(self, tmp_path):
        test_client, _ = make_client(
            tmp_path,
            provider=ProviderConfig(
                kind=ProviderKind.HTTP_CHAT,
                base_url="http://127.0.0.1:9",
                retry_max=0,
                retry_backoff_ms=1,
            ),
        )
        ingest_all(test_client)
        sid = test_client.post("/api/sessions", json={}).json()["session_id"]
        before = test_client.get(f"/api/sessions/{sid}").json()
        response = test_client.post(
            f"/api/sessions/{sid}/messages", json={"prompt": "hello"}
        )
        assert response.status_code == 502
        after = test_client.get(f"/api/sessions/{sid}").json()
        assert after == before  # no partial append

    def test_atomic_append_on_success(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        client.post(f"/api/sessions/{sid}/messages", json={"prompt": "q1"})
        tree = client.get(f"/api/sessions/{sid}").json()
        roles = [n["message"]["role"] for n in tree["nodes"].values()]
        assert roles.count("user") == 1
        assert roles.count("assistant") == 1

    def test_branching_via_api(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        first = client.post(f"/api/sessions/{sid}/messages", json={"prompt": "first"}).json()
        client.post(f"/api/sessions/{sid}/messages", json={"prompt": "second"})
        client.post(
            f"/api/sessions/{sid}/branch",
            json={"node_id": first["assistant_message"]["id"]},
        )
        client.post(f"/api/sessions/{sid}/messages", json={"prompt": "alternative"})
        tree = client.get(f"/api/sessions/{sid}").json()
        contents = [n["message"]["content"] for n in tree["nodes"].values()]
        assert "second" in contents and "alternative" in contents

    def test_refine_exhausts_with_failing_validator(self, tmp_path):
        fail_script = tmp_path / "fail.py"
        fail_script.write_text("import sys; sys.stderr.write('broken input\\n'); sys.exit(2)")
        test_client, _ = make_client(
            tmp_path,
            validator=ValidatorConfig(
                command_template=f"{sys.executable} {fail_script} {{file}}"
            ),
        )
        ingest_all(test_client)
        sid = test_client.post("/api/sessions", json={}).json()["session_id"]
        body = test_client.post(
            f"/api/sessions/{sid}/messages",
            json={"prompt": "Create a model", "refine": {"enabled": True, "max_iterations": 2}},
        ).json()
        outcome = body["refine_outcome"]
        assert outcome["status"] == "exhausted_attempts"
        assert len(outcome["transcript"]) == 3  # initial + 2 repairs
        tree = test_client.get(f"/api/sessions/{sid}").json()
        roles = [n["message"]["role"] for n in tree["nodes"].values()]
        assert roles.count("validator_feedback") == 2


class TestChunks:
    def test_chunk_includes_neighbor_ids(self, client):
        sid = client.post("/api/sessions", json={}).json()["session_id"]
        citations = client.post(
            f"/api/sessions/{sid}/messages",
            json={"prompt": "tutorial about particles"},
        ).json()["citations"]
        chunk = client.get(f"/api/chunks/{citations[0]['chunk_id']}").json()
        assert {"id", "text", "ordinal", "prev", "next", "category", "doc_path"} <= set(chunk)

    def test_unknown_chunk_404(self, client):
        response = client.get("/api/chunks/bogus")
        assert response.status_code == 404
        assert response.json()["error"]["code"] == "not_found"


class TestEvalEndpoint:
    def test_bundled_suite_runs(self, client):
        response = client.post("/api/eval/run", json={})
        assert response.status_code == 200
        report = response.json()
        assert len(report["per_case"]) == 28

    def test_empty_corpus_409(self, tmp_path):
        test_client, _ = make_client(tmp_path)
        response = test_client.post("/api/eval/run", json={})
        assert response.status_code == 409


class TestErrorEnvelope:
    def test_validation_error_envelope(self, client):
        response = client.post("/api/ingest", json={"category": "documentation"})
        assert response.status_code == 400
        body = response.json()
        assert set(body) == {"error"}
        assert set(body["error"]) == {"code", "message"}
