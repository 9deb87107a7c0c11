"""HTTP facade over the engine: ingestion, chat with branching sessions,
chunk inspection, refinement and eval runs.

Localhost-only by default: keeping the corpus and prompts on the
operator's machine is the point of a self-hosted pipeline. Index writes
are exclusive (a second concurrent ingest gets 409), session appends are
atomic per request, and every error leaves through one JSON envelope.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import evalharness
from .config import ServiceConfig
from .corpus import DocumentFormat, SourceCategory
from .engine import RagEngine
from .errors import (
    AbortedRunError,
    BadStatusError,
    BudgetImpossibleError,
    DecodeFailureError,
    EmptyDocumentError,
    EmptyIndexError,
    EmptyPromptError,
    InvalidConfigError,
    LlmTimeoutError,
    ProviderUnreachableError,
    SimragError,
    SpawnFailureError,
    UnknownNodeError,
    UnreachableError,
)
from .retrieval import RetrievalConfig, RetrievalMode
from .session import SessionTree

logger = logging.getLogger(__name__)

_STATUS_BY_ERROR: list[tuple[type, int]] = [
    (EmptyDocumentError, 422),
    (DecodeFailureError, 422),
    (UnknownNodeError, 404),
    (UnreachableError, 502),
    (LlmTimeoutError, 502),
    (ProviderUnreachableError, 502),
    (BadStatusError, 502),
    (BudgetImpossibleError, 507),
    (EmptyPromptError, 400),
    (EmptyIndexError, 400),
    (InvalidConfigError, 400),
    (SpawnFailureError, 500),
    (AbortedRunError, 409),
]


def _status_for(exc: SimragError) -> int:
    for err_type, status in _STATUS_BY_ERROR:
        if isinstance(exc, err_type):
            return status
    return 500


def _envelope(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


class IngestBody(BaseModel):
    path: str
    category: str
    format: str | None = None


class BranchBody(BaseModel):
    node_id: str


class RefineOptions(BaseModel):
    enabled: bool = False
    max_iterations: int | None = None


class MessageBody(BaseModel):
    prompt: str
    retrieval_overrides: dict | None = None
    refine: RefineOptions | None = None


class EvalRunBody(BaseModel):
    suite: str | None = None
    chained: bool = False


class SessionRegistry:
    """In-memory session cache backed by the sessions directory; appends
    swap in a fully-updated copy so readers never see a partial turn."""

    def __init__(self, sessions_dir: Path):
        self.sessions_dir = sessions_dir
        self._trees: dict[str, SessionTree] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def get(self, session_id: str) -> SessionTree:
        with self._registry_lock:
            tree = self._trees.get(session_id)
        if tree is not None:
            return tree
        try:
            tree = SessionTree.load(self.sessions_dir, session_id)
        except FileNotFoundError:
            raise UnknownNodeError(f"unknown session {session_id}")
        with self._registry_lock:
            self._trees.setdefault(session_id, tree)
            return self._trees[session_id]

    def put(self, tree: SessionTree) -> None:
        tree.save(self.sessions_dir)
        with self._registry_lock:
            self._trees[tree.session_id] = tree

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())


def _retrieval_overrides(engine: RagEngine, overrides: dict | None) -> RetrievalConfig | None:
    if not overrides:
        return None
    base = engine.config.retrieval
    quotas = overrides.get("quotas")
    if quotas is not None:
        quotas = {SourceCategory(k): int(v) for k, v in quotas.items()}
    return RetrievalConfig(
        k_total=int(overrides.get("k_total", base.k_total)),
        quotas=quotas if quotas is not None else base.quotas,
        neighbor_radius=int(overrides.get("neighbor_radius", base.neighbor_radius)),
        min_score=float(overrides.get("min_score", base.min_score)),
        mode=RetrievalMode(overrides.get("mode", base.mode.value)),
    )


def create_app(config: ServiceConfig, engine: RagEngine | None = None) -> FastAPI:
    engine = engine or RagEngine(config.engine)
    app = FastAPI(title="simrag", version="0.1.0")
    app.state.engine = engine
    app.state.config = config
    sessions = SessionRegistry(engine.sessions_dir)
    ingest_lock = threading.Lock()

    @app.exception_handler(SimragError)
    async def simrag_error_handler(_: Request, exc: SimragError):
        return _envelope(exc.code, str(exc), _status_for(exc))

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(_: Request, exc: RequestValidationError):
        return _envelope("bad_request", str(exc.errors()), 400)

    @app.exception_handler(FileNotFoundError)
    async def not_found_handler(_: Request, exc: FileNotFoundError):
        return _envelope("not_found", str(exc), 404)

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "index_size": len(engine.index),
            "provider_kind": engine.config.provider.kind.value,
        }

    @app.post("/api/ingest")
    def ingest(body: IngestBody):
        try:
            category = SourceCategory(body.category)
        except ValueError:
            return _envelope("bad_category", f"unknown category {body.category!r}", 400)
        fmt = None
        if body.format is not None:
            try:
                fmt = DocumentFormat(body.format)
            except ValueError:
                return _envelope("bad_format", f"unknown format {body.format!r}", 400)
        if not ingest_lock.acquire(blocking=False):
            return _envelope("ingest_in_progress", "another ingest is running", 409)
        try:
            doc, chunks = engine.ingest(body.path, category, fmt)
        finally:
            ingest_lock.release()
        return {"doc_id": doc.id, "chunk_count": len(chunks)}

    @app.post("/api/sessions")
    def create_session():
        tree = engine.new_session()
        sessions.put(tree)
        return {"session_id": tree.session_id}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return sessions.get(session_id).to_dict()

    @app.post("/api/sessions/{session_id}/branch")
    def branch_session(session_id: str, body: BranchBody):
        with sessions.lock_for(session_id):
            tree = sessions.get(session_id).copy()
            tree.branch(body.node_id)
            sessions.put(tree)
            return {"active_leaf": tree.active_leaf}

    @app.post("/api/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        refine = body.refine or RefineOptions()
        with sessions.lock_for(session_id):
            tree = sessions.get(session_id)
            # Work on a copy: the stored tree changes only if the whole
            # turn (including refinement rounds) succeeds.
            working = tree.copy()
            result = engine.chat(
                working,
                body.prompt,
                retrieval=_retrieval_overrides(engine, body.retrieval_overrides),
                refine_enabled=refine.enabled,
                refine_max_iterations=refine.max_iterations,
            )
            sessions.put(working)
        response = {
            "assistant_message": working.nodes[result.assistant_node_id].message.to_dict(),
            "citations": result.citations,
            "active_leaf": working.active_leaf,
        }
        if result.refine_outcome is not None:
            response["refine_outcome"] = result.refine_outcome.to_dict()
        return response

    @app.get("/api/chunks/{chunk_id}")
    def get_chunk(chunk_id: str):
        chunk = engine.corpus.get_chunk(chunk_id)
        if chunk is None:
            return _envelope("not_found", f"unknown chunk {chunk_id}", 404)
        doc = engine.corpus.get_document(chunk.doc_id)
        return {
            "id": chunk.id,
            "doc_id": chunk.doc_id,
            "ordinal": chunk.ordinal,
            "text": chunk.text,
            "word_count": chunk.word_count,
            "prev": chunk.prev_id,
            "next": chunk.next_id,
            "category": doc.category.value if doc else None,
            "doc_path": doc.source_path if doc else None,
        }

    @app.post("/api/eval/run")
    def eval_run(body: EvalRunBody):
        if ingest_lock.locked():
            return _envelope("ingest_in_progress", "index is being written", 503)
        suite_path = Path(body.suite) if body.suite else evalharness.default_suite_path()
        cases = evalharness.load_suite(suite_path)
        return evalharness.run_suite(
            cases, engine, chained=body.chained, row_limit=config.eval_row_limit
        )

    if config.ui_dir and Path(config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    return app
