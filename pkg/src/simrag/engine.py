"""Pipeline wiring: corpus + index + retrieval + session + LLM + refine.

One RagEngine owns the on-disk state under ``data_dir`` (corpus.json,
chunks.jsonl, index.jsonl, sessions/) and exposes the ingest/query/chat
operations the CLI, HTTP service and eval harness share. Index writes are
serialized; chat works on whatever snapshot is current.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (
    DEFAULT_CHUNK_WORDS,
    DEFAULT_OVERLAP_WORDS,
    Chunk,
    CorpusStore,
    Document,
    DocumentFormat,
    SourceCategory,
)
from .errors import EmptyIndexError
from .index import EmbedderConfig, IndexEntry, VectorIndex, embed_text
from .llm import LlmRequest, ProviderConfig, generate
from .refine import (
    DEFAULT_MAX_ITERATIONS,
    RefineOutcome,
    ValidatorConfig,
    refine_loop,
)
from .retrieval import RetrievalConfig, format_citations, retrieve
from .session import (
    BudgetConfig,
    Role,
    SessionTree,
    assemble_prompt,
    build_system_prompt,
    bundle_to_messages,
)

logger = logging.getLogger(__name__)

INDEX_FILENAME = "index.jsonl"
SESSIONS_DIRNAME = "sessions"


@dataclass
class EngineConfig:
    data_dir: Path
    software_name: str = "Pasimodo"
    focus_system_prompt: bool = True
    system_prompt_template: str | None = None
    llm_model: str = "stub"
    chunk_words: int = DEFAULT_CHUNK_WORDS
    overlap_words: int = DEFAULT_OVERLAP_WORDS
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    validator: ValidatorConfig | None = None
    refine_max_iterations: int = DEFAULT_MAX_ITERATIONS

    def digest(self) -> str:
        payload = json.dumps(
            {
                "software_name": self.software_name,
                "focus": self.focus_system_prompt,
                "model": self.llm_model,
                "chunk_words": self.chunk_words,
                "overlap_words": self.overlap_words,
                "embedder": self.embedder.digest(),
                "provider": self.provider.kind.value,
                "budget": [
                    self.budget.max_context_tokens,
                    self.budget.history_window,
                    self.budget.reserve_for_response,
                ],
                "retrieval": [
                    self.retrieval.k_total,
                    self.retrieval.mode.value,
                    self.retrieval.neighbor_radius,
                    self.retrieval.min_score,
                    sorted(
                        (c.value, q) for c, q in (self.retrieval.quotas or {}).items()
                    ),
                ],
            },
            sort_keys=True,
        ).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class ChatResult:
    assistant_text: str
    assistant_node_id: str
    citations: list[dict]
    refine_outcome: RefineOutcome | None = None


class RagEngine:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self.corpus = self._load_corpus()
        self.index = self._load_index()

    def _load_corpus(self) -> CorpusStore:
        if (self.data_dir / "corpus.json").exists():
            return CorpusStore.load(self.data_dir)
        return CorpusStore(
            chunk_words=self.config.chunk_words,
            overlap_words=self.config.overlap_words,
        )

    def _load_index(self) -> VectorIndex:
        path = self.data_dir / INDEX_FILENAME
        if path.exists():
            return VectorIndex.load(path)
        return VectorIndex(
            dim=self.config.embedder.dim,
            provider_digest=self.config.embedder.digest(),
        )

    @property
    def sessions_dir(self) -> Path:
        return self.data_dir / SESSIONS_DIRNAME

    def config_digest(self) -> str:
        return hashlib.sha256(
            (self.config.digest() + self.corpus.digest()).encode("utf-8")
        ).hexdigest()[:16]

    # --- ingestion ---

    def ingest(
        self,
        source_path: str | Path,
        category: SourceCategory,
        format: DocumentFormat | None = None,
    ) -> tuple[Document, list[Chunk]]:
        """Ingest, chunk, embed and index one document, then persist."""
        with self._write_lock:
            doc, chunks = self.corpus.ingest(source_path, category, format)
            for chunk in chunks:
                self.index.add(
                    IndexEntry(
                        chunk_id=chunk.id,
                        category=category,
                        vector=embed_text(chunk.text, self.config.embedder),
                    )
                )
            self.persist()
        logger.info("ingested %s: %d chunks", source_path, len(chunks))
        return doc, chunks

    def persist(self) -> None:
        self.corpus.save(self.data_dir)
        self.index.save(self.data_dir / INDEX_FILENAME)

    # --- retrieval ---

    def query(
        self, prompt: str, retrieval: RetrievalConfig | None = None
    ) -> tuple[list, list[dict]]:
        config = retrieval or self.config.retrieval
        results = retrieve(prompt, config, self.index, self.corpus, self.config.embedder)
        return results, format_citations(results, self.corpus)

    # --- sessions and chat ---

    def system_prompt(self) -> str:
        return build_system_prompt(
            self.config.software_name,
            self.config.focus_system_prompt,
            self.config.system_prompt_template,
        )

    def new_session(self, session_id: str | None = None) -> SessionTree:
        return SessionTree.new(session_id, system_text=self.system_prompt())

    def _generate_for(
        self, tree: SessionTree, prompt: str, retrieval: RetrievalConfig | None
    ) -> tuple[str, list[dict]]:
        """retrieve -> assemble -> generate; does not touch the tree."""
        results, citations = self.query(prompt, retrieval)
        bundle = assemble_prompt(
            self.system_prompt(), results, self.corpus, tree, prompt, self.config.budget
        )
        request = LlmRequest(
            model=self.config.llm_model,
            messages=bundle_to_messages(bundle),
            max_context_tokens=self.config.budget.max_context_tokens,
        )
        response = generate(request, self.config.provider)
        return response.content, citations

    def chat(
        self,
        tree: SessionTree,
        prompt: str,
        retrieval: RetrievalConfig | None = None,
        refine_enabled: bool = False,
        refine_max_iterations: int | None = None,
    ) -> ChatResult:
        """One conversation turn on the active branch, optionally followed
        by validator-driven refinement rounds."""
        if len(self.index) == 0:
            raise EmptyIndexError("ingest documents before chatting")
        content, citations = self._generate_for(tree, prompt, retrieval)
        tree.append(Role.USER, prompt)
        node_id = tree.append(Role.ASSISTANT, content, citations)

        outcome = None
        if refine_enabled:
            if self.config.validator is None:
                raise ValueError("refinement requested but no validator configured")

            def repair(t: SessionTree, feedback: str) -> str:
                text, repair_citations = self._generate_for(t, feedback, retrieval)
                t.append(Role.VALIDATOR_FEEDBACK, feedback)
                t.append(Role.ASSISTANT, text, repair_citations)
                return text

            outcome = refine_loop(
                tree,
                content,
                self.config.validator,
                repair,
                refine_max_iterations or self.config.refine_max_iterations,
            )
            node_id = tree.active_leaf
            content = tree.nodes[node_id].message.content
            citations = tree.nodes[node_id].message.citations

        return ChatResult(
            assistant_text=content,
            assistant_node_id=node_id,
            citations=citations,
            refine_outcome=outcome,
        )

    def save_session(self, tree: SessionTree) -> None:
        tree.save(self.sessions_dir)

    def load_session(self, session_id: str) -> SessionTree:
        return SessionTree.load(self.sessions_dir, session_id)
