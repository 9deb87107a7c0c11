"""Minimal JSON-over-HTTP chat client for a local model server.

The wire protocol is deliberately neutral (two endpoints, `/chat` and
`/models`) so any local server can be adapted behind it. Defaults request
repeatability: temperature 0 and an 8192-token context window. The stub
provider answers deterministically from the prompt itself, which lets the
whole test and eval suite run with no server at all.
"""

from __future__ import annotations

import enum
import os
import threading
import time
from dataclasses import dataclass, field

import httpx

from .errors import (
    BadStatusError,
    InvalidConfigError,
    LlmTimeoutError,
    MalformedResponseError,
    UnreachableError,
)
from .session import CONTEXT_HEADER_PREFIX

DEFAULT_TEMPERATURE = 0.0
DEFAULT_NUM_CTX = 8192
DEFAULT_TIMEOUT_S = 300.0
DEFAULT_RETRY_MAX = 2
DEFAULT_RETRY_BACKOFF_MS = 500

LLM_URL_ENV = "SIMRAG_LLM_URL"
LLM_MODEL_ENV = "SIMRAG_LLM_MODEL"

STUB_MODEL_NAME = "stub"
STUB_MARKER = "[stub-response]"

# Single-GPU servers choke on request floods; cap concurrent calls.
_MAX_CONCURRENT_REQUESTS = 4
_request_slots = threading.Semaphore(_MAX_CONCURRENT_REQUESTS)


class ProviderKind(str, enum.Enum):
    STUB = "stub"
    HTTP_CHAT = "http"


@dataclass
class ProviderConfig:
    kind: ProviderKind = ProviderKind.STUB
    base_url: str | None = None
    retry_max: int = DEFAULT_RETRY_MAX
    retry_backoff_ms: int = DEFAULT_RETRY_BACKOFF_MS

    def __post_init__(self) -> None:
        if self.kind is ProviderKind.HTTP_CHAT:
            self.base_url = self.base_url or os.environ.get(LLM_URL_ENV)
            if not self.base_url:
                raise InvalidConfigError("http provider requires base_url")
            self.base_url = self.base_url.rstrip("/")
        if self.retry_max < 0 or self.retry_backoff_ms <= 0:
            raise InvalidConfigError("retry_max must be >= 0 and backoff positive")


@dataclass
class LlmRequest:
    model: str
    messages: list[dict]
    temperature: float = DEFAULT_TEMPERATURE
    max_context_tokens: int = DEFAULT_NUM_CTX
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self) -> None:
        if not self.messages:
            raise InvalidConfigError("request needs at least one message")
        roles = [m.get("role") for m in self.messages]
        if "system" in roles and roles[0] != "system":
            raise InvalidConfigError("system message must come first")

    def to_wire_body(self) -> dict:
        return {
            "model": self.model,
            "messages": self.messages,
            "options": {
                "temperature": self.temperature,
                "num_ctx": self.max_context_tokens,
            },
        }


@dataclass
class LlmResponse:
    content: str
    model: str
    prompt_token_count: int | None = None
    completion_token_count: int | None = None
    latency_ms: int = 0


def _stub_generate(request: LlmRequest) -> LlmResponse:
    """Fixed marker + first 64 chars of the last user message + the context
    block headers found anywhere in the prompt, in order."""
    last_user = ""
    for message in reversed(request.messages):
        if message.get("role") == "user":
            last_user = message.get("content", "")
            break
    headers = [
        line
        for message in request.messages
        for line in message.get("content", "").splitlines()
        if line.startswith(CONTEXT_HEADER_PREFIX)
    ]
    content = "\n".join([STUB_MARKER, last_user[:64], *headers])
    return LlmResponse(content=content, model=STUB_MODEL_NAME, latency_ms=0)


def generate(request: LlmRequest, provider: ProviderConfig) -> LlmResponse:
    """Send one chat request; retries transport errors and 5xx with fixed
    backoff, never retries 4xx."""
    if provider.kind is ProviderKind.STUB:
        return _stub_generate(request)

    url = f"{provider.base_url}/chat"
    start = time.monotonic()
    last_error: Exception | None = None
    for attempt in range(1 + provider.retry_max):
        if attempt > 0:
            time.sleep(provider.retry_backoff_ms / 1000.0)
        try:
            with _request_slots:
                response = httpx.post(
                    url, json=request.to_wire_body(), timeout=request.timeout_s
                )
        except httpx.TimeoutException as exc:
            last_error = exc
            continue
        except httpx.HTTPError as exc:
            last_error = exc
            continue
        if 400 <= response.status_code < 500:
            raise BadStatusError(response.status_code)
        if response.status_code >= 500:
            last_error = BadStatusError(response.status_code, f"server error {response.status_code}")
            continue
        try:
            body = response.json()
            content = body["message"]["content"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected chat response shape: {exc}") from exc
        latency_ms = int((time.monotonic() - start) * 1000)
        return LlmResponse(
            content=content,
            model=body.get("model", request.model),
            prompt_token_count=body.get("prompt_token_count"),
            completion_token_count=body.get("completion_token_count"),
            latency_ms=latency_ms,
        )
    if isinstance(last_error, httpx.TimeoutException):
        raise LlmTimeoutError(f"no response within {request.timeout_s}s: {last_error}")
    raise UnreachableError(f"{url} unreachable after {1 + provider.retry_max} attempts: {last_error}")


def list_models(provider: ProviderConfig) -> list[str]:
    if provider.kind is ProviderKind.STUB:
        return [STUB_MODEL_NAME]
    url = f"{provider.base_url}/models"
    try:
        response = httpx.get(url, timeout=30.0)
    except httpx.HTTPError as exc:
        raise UnreachableError(f"{url} unreachable: {exc}") from exc
    if response.status_code >= 400:
        raise BadStatusError(response.status_code)
    try:
        body = response.json()
    except ValueError as exc:
        raise MalformedResponseError("models response is not JSON") from exc
    names = body.get("models") if isinstance(body, dict) else body
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise MalformedResponseError("models response is not an array of names")
    return names
