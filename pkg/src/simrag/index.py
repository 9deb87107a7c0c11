"""Embedding and exact top-k cosine search over a persistent vector index.

The built-in embedder is a deterministic signed bag-of-words hash, so the
whole pipeline runs with no model server; a remote embedding server can be
plugged in via config or SIMRAG_EMBED_URL. Search is exact brute force:
corpora of tens of documents make exactness affordable and keep oracle
tests trivial.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from . import kernels
from .corpus import SourceCategory
from .errors import (
    CorruptIndexError,
    DimensionMismatchError,
    InvalidConfigError,
    IoFailureError,
    MalformedResponseError,
    ProviderUnreachableError,
    VersionMismatchError,
)

INDEX_FORMAT_VERSION = 1
DEFAULT_EMBED_DIM = 256

EMBED_URL_ENV = "SIMRAG_EMBED_URL"


class EmbedderProvider(str, enum.Enum):
    BUILTIN_HASH = "builtin-hash"
    REMOTE_SERVER = "remote-server"


@dataclass
class EmbedderConfig:
    provider: EmbedderProvider = EmbedderProvider.BUILTIN_HASH
    dim: int = DEFAULT_EMBED_DIM
    endpoint: str | None = None
    model_name: str | None = None

    def __post_init__(self) -> None:
        if self.provider is EmbedderProvider.REMOTE_SERVER:
            self.endpoint = self.endpoint or os.environ.get(EMBED_URL_ENV)
            if not self.endpoint or not self.model_name:
                raise InvalidConfigError("remote embedder requires endpoint and model_name")

    def digest(self) -> str:
        payload = json.dumps(
            {
                "provider": self.provider.value,
                "dim": self.dim,
                "endpoint": self.endpoint,
                "model_name": self.model_name,
            },
            sort_keys=True,
        ).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def is_zero_vector(vector: np.ndarray) -> bool:
    """True for the all-zeros sentinel produced by empty text."""
    return not vector.any()


def _normalize(values: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return np.zeros(len(values), dtype=np.float64)
    return values / norm


def embed_text(text: str, config: EmbedderConfig) -> np.ndarray:
    """Embed text into a unit vector (or the zero sentinel for empty text)."""
    if config.provider is EmbedderProvider.BUILTIN_HASH:
        return _normalize(kernels.hash_embed(text, config.dim))

    try:
        response = httpx.post(
            config.endpoint,
            json={"model": config.model_name, "input": text},
            timeout=30.0,
        )
        response.raise_for_status()
        body = response.json()
    except httpx.HTTPStatusError as exc:
        raise ProviderUnreachableError(f"embedding server error: {exc}") from exc
    except httpx.HTTPError as exc:
        raise ProviderUnreachableError(f"embedding server unreachable: {exc}") from exc
    except ValueError as exc:
        raise MalformedResponseError("embedding response is not JSON") from exc

    values = body.get("embedding") if isinstance(body, dict) else None
    if not isinstance(values, list):
        raise MalformedResponseError("embedding response missing 'embedding' array")
    if len(values) != config.dim:
        raise DimensionMismatchError(
            f"server returned {len(values)} dimensions, expected {config.dim}"
        )
    return _normalize(np.asarray(values, dtype=np.float64))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors; the zero sentinel compares as 0.0."""
    if len(a) != len(b):
        raise DimensionMismatchError(f"{len(a)} != {len(b)}")
    if is_zero_vector(a) or is_zero_vector(b):
        return 0.0
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


@dataclass
class IndexEntry:
    chunk_id: str
    category: SourceCategory
    vector: np.ndarray


class VectorIndex:
    """Exact-search index over unit vectors keyed by chunk id.

    Duplicate chunk ids replace the previous entry; search returns the
    exact top-k by descending cosine score with ties broken by ascending
    chunk id.
    """

    def __init__(self, dim: int, provider_digest: str = ""):
        self.dim = dim
        self.provider_digest = provider_digest
        self._ids: list[str] = []
        self._rows: dict[str, int] = {}
        self._categories: list[SourceCategory] = []
        self._vectors: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._rows

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorIndex):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.provider_digest == other.provider_digest
            and self._rows.keys() == other._rows.keys()
            and all(
                self._categories[self._rows[cid]] == other._categories[other._rows[cid]]
                and np.array_equal(
                    self._vectors[self._rows[cid]], other._vectors[other._rows[cid]]
                )
                for cid in self._rows
            )
        )

    def add(self, entry: IndexEntry) -> None:
        if len(entry.vector) != self.dim:
            raise DimensionMismatchError(
                f"entry has {len(entry.vector)} dimensions, index has {self.dim}"
            )
        vector = np.asarray(entry.vector, dtype=np.float64)
        row = self._rows.get(entry.chunk_id)
        if row is not None:
            self._categories[row] = entry.category
            self._vectors[row] = vector
        else:
            self._rows[entry.chunk_id] = len(self._ids)
            self._ids.append(entry.chunk_id)
            self._categories.append(entry.category)
            self._vectors.append(vector)
        self._matrix = None

    def get(self, chunk_id: str) -> IndexEntry | None:
        row = self._rows.get(chunk_id)
        if row is None:
            return None
        return IndexEntry(chunk_id, self._categories[row], self._vectors[row])

    def entries(self) -> list[IndexEntry]:
        return [IndexEntry(cid, self._categories[i], self._vectors[i]) for i, cid in enumerate(self._ids)]

    def remove(self, chunk_id: str) -> None:
        if chunk_id not in self._rows:
            return
        keep = [e for e in self.entries() if e.chunk_id != chunk_id]
        self._ids, self._rows, self._categories, self._vectors = [], {}, [], []
        self._matrix = None
        for entry in keep:
            self.add(entry)

    def _score_matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = (
                np.vstack(self._vectors) if self._vectors else np.empty((0, self.dim))
            )
        return self._matrix

    def search(
        self,
        query: np.ndarray,
        k: int,
        category_filter: SourceCategory | None = None,
    ) -> list[tuple[str, float]]:
        """Exact top-k by descending cosine, ties by ascending chunk id."""
        if len(query) != self.dim:
            raise DimensionMismatchError(f"query has {len(query)} dimensions, index has {self.dim}")
        if k <= 0 or not self._ids:
            return []
        # Row-local reduction, not BLAS gemv: gemv can round identical rows
        # differently depending on their position, breaking the id tie rule.
        scores = (self._score_matrix() * np.asarray(query, dtype=np.float64)).sum(axis=1)
        candidates = [
            (self._ids[i], float(scores[i]))
            for i in range(len(self._ids))
            if category_filter is None or self._categories[i] is category_filter
        ]
        candidates.sort(key=lambda item: (-item[1], item[0]))
        return candidates[:k]

    def save(self, path: str | Path) -> None:
        entry_lines = [
            json.dumps(
                {
                    "chunk_id": cid,
                    "category": self._categories[i].value,
                    "vector": self._vectors[i].tolist(),
                },
                ensure_ascii=False,
            )
            for i, cid in enumerate(self._ids)
        ]
        body = "".join(line + "\n" for line in entry_lines)
        header = json.dumps(
            {
                "version": INDEX_FORMAT_VERSION,
                "dim": self.dim,
                "provider_digest": self.provider_digest,
                "entry_count": len(entry_lines),
                "entries_digest": hashlib.sha256(body.encode("utf-8")).hexdigest(),
            }
        )
        try:
            Path(path).write_text(header + "\n" + body, encoding="utf-8")
        except OSError as exc:
            raise IoFailureError(f"cannot write index to {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoFailureError(f"cannot read index from {path}: {exc}") from exc
        lines = raw.splitlines(keepends=True)
        if not lines:
            raise CorruptIndexError(f"{path}: empty index file")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise CorruptIndexError(f"{path}: unreadable header") from exc
        if header.get("version") != INDEX_FORMAT_VERSION:
            raise VersionMismatchError(
                f"{path}: format version {header.get('version')}, expected {INDEX_FORMAT_VERSION}"
            )
        body = "".join(lines[1:])
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != header.get("entries_digest"):
            raise CorruptIndexError(f"{path}: entries digest mismatch")
        index = cls(dim=header["dim"], provider_digest=header.get("provider_digest", ""))
        entry_lines = [line for line in body.splitlines() if line.strip()]
        if len(entry_lines) != header.get("entry_count"):
            raise CorruptIndexError(
                f"{path}: {len(entry_lines)} entries, header says {header.get('entry_count')}"
            )
        for line in entry_lines:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptIndexError(f"{path}: unreadable entry line") from exc
            index.add(
                IndexEntry(
                    chunk_id=rec["chunk_id"],
                    category=SourceCategory(rec["category"]),
                    vector=np.asarray(rec["vector"], dtype=np.float64),
                )
            )
        return index
