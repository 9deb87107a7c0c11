"""Prompt-to-context retrieval: flat or category-stratified, with neighbor
expansion.

Stratified mode draws the top chunks per source category under quotas
instead of one global top-k, guaranteeing category coverage; shortfall in
one category is never redistributed to another, which would reintroduce
single-category dominance. Neighbor expansion pads each hit with its
ordinally adjacent chunks so truncated elements (split XML components,
wiki sections) arrive whole.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusStore, SourceCategory
from .errors import DanglingChunkRefError, EmptyIndexError, EmptyPromptError, InvalidConfigError
from .index import EmbedderConfig, VectorIndex, embed_text

DEFAULT_K_TOTAL = 4
DEFAULT_NEIGHBOR_RADIUS = 1

# Used when Stratified mode is selected without explicit quotas: the three
# mandatory context sections plus domain literature.
DEFAULT_STRATIFIED_QUOTAS: dict[SourceCategory, int] = {
    SourceCategory.API_REFERENCE: 1,
    SourceCategory.INPUT_EXAMPLE: 1,
    SourceCategory.DOCUMENTATION: 1,
    SourceCategory.PROJECT_REPORT: 0,
    SourceCategory.DOMAIN_LITERATURE: 1,
}


class RetrievalMode(str, enum.Enum):
    FLAT = "flat"
    STRATIFIED = "stratified"


class Origin(str, enum.Enum):
    DIRECT_HIT = "direct"
    NEIGHBOR = "neighbor"


@dataclass
class RetrievalConfig:
    k_total: int = DEFAULT_K_TOTAL
    quotas: dict[SourceCategory, int] | None = None
    neighbor_radius: int = DEFAULT_NEIGHBOR_RADIUS
    min_score: float = 0.0
    mode: RetrievalMode = RetrievalMode.FLAT

    def __post_init__(self) -> None:
        if self.k_total < 1:
            raise InvalidConfigError("k_total must be >= 1")
        if self.neighbor_radius < 0:
            raise InvalidConfigError("neighbor_radius must be >= 0")
        if self.quotas is not None:
            if any(q < 0 for q in self.quotas.values()):
                raise InvalidConfigError("quotas must be non-negative")
            if self.mode is RetrievalMode.STRATIFIED and sum(self.quotas.values()) < 1:
                raise InvalidConfigError("stratified quotas must sum to >= 1")

    def effective_quotas(self) -> dict[SourceCategory, int]:
        if self.quotas is not None:
            return self.quotas
        return dict(DEFAULT_STRATIFIED_QUOTAS)


@dataclass
class RetrievalResult:
    chunk_id: str
    score: float
    category: SourceCategory
    origin: Origin = Origin.DIRECT_HIT
    anchor_id: str | None = None  # the DirectHit this neighbor belongs to

    @property
    def is_direct(self) -> bool:
        return self.origin is Origin.DIRECT_HIT


def expand_neighbors(
    results: list[RetrievalResult],
    radius: int,
    corpus: CorpusStore,
) -> list[RetrievalResult]:
    """Add chunks ordinally within ``radius`` of each DirectHit.

    Neighbors carry their anchor's score (for ordering only), are clamped
    to document boundaries, and deduplicate in favor of DirectHits.
    """
    if radius == 0:
        return list(results)
    combined: dict[str, RetrievalResult] = {}
    for result in results:
        if result.is_direct:
            combined[result.chunk_id] = result
    for result in results:
        if not result.is_direct:
            combined.setdefault(result.chunk_id, result)
        chunk = corpus.get_chunk(result.chunk_id)
        if chunk is None or not result.is_direct:
            continue
        for ordinal in range(chunk.ordinal - radius, chunk.ordinal + radius + 1):
            if ordinal == chunk.ordinal or ordinal < 0:
                continue
            neighbor = corpus.chunk_at(chunk.doc_id, ordinal)
            if neighbor is None:
                continue
            candidate = RetrievalResult(
                chunk_id=neighbor.id,
                score=result.score,
                category=result.category,
                origin=Origin.NEIGHBOR,
                anchor_id=result.chunk_id,
            )
            existing = combined.get(neighbor.id)
            if existing is None or (not existing.is_direct and candidate.score > existing.score):
                combined[neighbor.id] = candidate
    return _ordered(list(combined.values()), corpus)


def _ordered(results: list[RetrievalResult], corpus: CorpusStore) -> list[RetrievalResult]:
    """DirectHits by descending score, each followed by its neighbors in
    ordinal order."""
    direct = sorted(
        (r for r in results if r.is_direct), key=lambda r: (-r.score, r.chunk_id)
    )
    neighbors_by_anchor: dict[str, list[RetrievalResult]] = {}
    for result in results:
        if not result.is_direct:
            neighbors_by_anchor.setdefault(result.anchor_id or "", []).append(result)
    ordered: list[RetrievalResult] = []
    for hit in direct:
        ordered.append(hit)
        group = neighbors_by_anchor.pop(hit.chunk_id, [])
        group.sort(key=lambda r: _ordinal_of(r, corpus))
        ordered.extend(group)
    for leftover in neighbors_by_anchor.values():  # anchors missing from set
        leftover.sort(key=lambda r: _ordinal_of(r, corpus))
        ordered.extend(leftover)
    return ordered


def _ordinal_of(result: RetrievalResult, corpus: CorpusStore) -> int:
    chunk = corpus.get_chunk(result.chunk_id)
    return chunk.ordinal if chunk is not None else 0


def retrieve(
    prompt: str,
    config: RetrievalConfig,
    index: VectorIndex,
    corpus: CorpusStore,
    embedder: EmbedderConfig,
) -> list[RetrievalResult]:
    """Rank context chunks for a prompt.

    Flat mode takes the global top ``k_total`` above ``min_score``;
    stratified mode fills per-category quotas independently. Both then run
    neighbor expansion and deduplicate by chunk id.
    """
    if not prompt.strip():
        raise EmptyPromptError("prompt is empty")
    if len(index) == 0:
        raise EmptyIndexError("index has no entries")

    query = embed_text(prompt, embedder)
    hits: list[RetrievalResult] = []
    if config.mode is RetrievalMode.FLAT:
        for chunk_id, score in index.search(query, config.k_total):
            if score >= config.min_score:
                hits.append(_direct_hit(chunk_id, score, corpus))
    else:
        for category, quota in config.effective_quotas().items():
            if quota <= 0:
                continue
            for chunk_id, score in index.search(query, quota, category_filter=category):
                if score >= config.min_score:
                    hits.append(_direct_hit(chunk_id, score, corpus))

    expanded = expand_neighbors(hits, config.neighbor_radius, corpus)
    return _ordered(expanded, corpus) if config.neighbor_radius == 0 else expanded


def _direct_hit(chunk_id: str, score: float, corpus: CorpusStore) -> RetrievalResult:
    chunk = corpus.get_chunk(chunk_id)
    if chunk is None:
        raise DanglingChunkRefError(f"indexed chunk {chunk_id} not in corpus")
    return RetrievalResult(
        chunk_id=chunk_id,
        score=score,
        category=corpus.chunk_category(chunk),
        origin=Origin.DIRECT_HIT,
    )


def format_citations(results: list[RetrievalResult], corpus: CorpusStore) -> list[dict]:
    """One citation per unique chunk, in final result order."""
    citations = []
    seen: set[str] = set()
    for result in results:
        if result.chunk_id in seen:
            continue
        seen.add(result.chunk_id)
        chunk = corpus.get_chunk(result.chunk_id)
        if chunk is None:
            raise DanglingChunkRefError(f"result references missing chunk {result.chunk_id}")
        doc = corpus.get_document(chunk.doc_id)
        citations.append(
            {
                "chunk_id": result.chunk_id,
                "doc_path": doc.source_path if doc else "",
                "ordinal": chunk.ordinal,
                "category": result.category.value,
                "score": result.score,
            }
        )
    return citations
