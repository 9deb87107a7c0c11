"""Exception hierarchy.

Every domain error raised by this package derives from SimragError so the
service layer can map them onto the JSON error envelope in one place.
"""

from __future__ import annotations


class SimragError(Exception):
    """Base class for all domain errors."""

    code = "internal"


# corpus

class EmptyDocumentError(SimragError):
    """Document has zero words after normalization."""

    code = "empty_document"


class DecodeFailureError(SimragError):
    """More than 10% of the file's bytes decoded to replacement characters."""

    code = "decode_failure"


class InvalidConfigError(SimragError):
    code = "invalid_config"


class IncompleteChunkSetError(SimragError):
    """Chunk list is missing one or more ordinals."""

    code = "incomplete_chunk_set"


# index

class DimensionMismatchError(SimragError):
    code = "dimension_mismatch"


class ProviderUnreachableError(SimragError):
    """Remote embedding server could not be reached."""

    code = "provider_unreachable"


class IoFailureError(SimragError):
    code = "io_failure"


class VersionMismatchError(SimragError):
    code = "version_mismatch"


class CorruptIndexError(SimragError):
    code = "corrupt_index"


# retrieval

class EmptyIndexError(SimragError):
    code = "empty_index"


class EmptyPromptError(SimragError):
    code = "empty_prompt"


class DanglingChunkRefError(SimragError):
    """Retrieval result references a chunk that no longer exists."""

    code = "dangling_chunk_ref"


# session

class UnknownNodeError(SimragError):
    code = "unknown_node"


class BudgetImpossibleError(SimragError):
    """System prompt plus user prompt alone exceed the context budget."""

    code = "budget_impossible"


# llm client

class UnreachableError(SimragError):
    """Model server unreachable after all retries."""

    code = "unreachable"


class BadStatusError(SimragError):
    """Model server answered with a 4xx status; never retried."""

    code = "bad_status"

    def __init__(self, status_code: int, message: str = ""):
        super().__init__(message or f"server returned status {status_code}")
        self.status_code = status_code


class MalformedResponseError(SimragError):
    code = "malformed_response"


class LlmTimeoutError(SimragError):
    code = "timeout"


# refine

class EmptyModelError(SimragError):
    """Extracting model text from an LLM response yielded only whitespace."""

    code = "empty_model"


class ValidatorTimeoutError(SimragError):
    code = "validator_timeout"


class SpawnFailureError(SimragError):
    """Validator command could not be started."""

    code = "spawn_failure"


# eval harness

class ParseFailureError(SimragError):
    code = "parse_failure"


class DuplicateCaseIdError(SimragError):
    code = "duplicate_case_id"


class BadCategoryMappingError(SimragError):
    """Case id's major number does not match a known task category."""

    code = "bad_category_mapping"


class AbortedRunError(SimragError):
    """Suite run aborted because the corpus or index could not be loaded."""

    code = "aborted_run"
