"""Error-driven refinement of generated simulation input files.

A generated model is extracted from the LLM response, written to a temp
file and validated by an operator-supplied external command. On failure
the validator's error output is fed back to the LLM for a bounded number
of repair rounds. Outcomes always carry the full attempt transcript: even
a Valid result needs human review, because models may change in places
besides the reported error.
"""

from __future__ import annotations

import enum
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import (
    EmptyModelError,
    InvalidConfigError,
    SpawnFailureError,
    ValidatorTimeoutError,
)
from .session import Role, SessionTree

DEFAULT_VALIDATOR_TIMEOUT_S = 60.0
DEFAULT_MAX_ITERATIONS = 3

STREAM_EXCERPT_BYTES = 16 * 1024  # tail-preserving: the fatal error is at the end

FEEDBACK_TEMPLATE = (
    "The simulation run failed with the following error output. "
    "Fix the input model.\n\n{stderr}"
)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


@dataclass
class ValidatorConfig:
    command_template: str
    timeout_s: float = DEFAULT_VALIDATOR_TIMEOUT_S
    success_exit_codes: frozenset[int] = frozenset({0})
    scratch_dir: str | None = None

    def __post_init__(self) -> None:
        if self.command_template.count("{file}") != 1:
            raise InvalidConfigError("command_template must contain '{file}' exactly once")
        if self.timeout_s <= 0:
            raise InvalidConfigError("timeout_s must be positive")
        self.success_exit_codes = frozenset(self.success_exit_codes)


class RefineStatus(str, enum.Enum):
    VALID = "valid"
    EXHAUSTED_ATTEMPTS = "exhausted_attempts"
    VALIDATOR_ERROR = "validator_error"


@dataclass
class AttemptRecord:
    attempt_text: str
    exit_code: int
    stderr_excerpt: str

    def to_dict(self) -> dict:
        return {
            "attempt_text": self.attempt_text,
            "exit_code": self.exit_code,
            "stderr_excerpt": self.stderr_excerpt,
        }


@dataclass
class RefineOutcome:
    status: RefineStatus
    iterations_used: int
    final_text: str
    transcript: list[AttemptRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations_used": self.iterations_used,
            "final_text": self.final_text,
            "transcript": [entry.to_dict() for entry in self.transcript],
        }


def extract_model_text(llm_response: str) -> str:
    """Contents of the first fenced code block, or the whole trimmed
    response when no fence exists."""
    match = _FENCE_RE.search(llm_response)
    text = match.group(1) if match else llm_response
    text = text.strip()
    if not text:
        raise EmptyModelError("extracted model text is empty")
    return text


def _tail(data: bytes) -> str:
    return data[-STREAM_EXCERPT_BYTES:].decode("utf-8", errors="replace")


def validate(model_text: str, config: ValidatorConfig) -> dict:
    """Run the validator command on ``model_text`` written to a fresh temp
    file; returns {exit_code, stdout, stderr} with tail-truncated streams."""
    with tempfile.TemporaryDirectory(dir=config.scratch_dir) as tmp:
        model_path = Path(tmp) / "model.xml"
        model_path.write_text(model_text, encoding="utf-8")
        args = [part.replace("{file}", str(model_path)) for part in shlex.split(config.command_template)]
        try:
            proc = subprocess.run(
                args, capture_output=True, timeout=config.timeout_s
            )
        except FileNotFoundError as exc:
            raise SpawnFailureError(f"validator command not found: {args[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ValidatorTimeoutError(
                f"validator exceeded {config.timeout_s}s"
            ) from exc
        return {
            "exit_code": proc.returncode,
            "stdout": _tail(proc.stdout),
            "stderr": _tail(proc.stderr),
        }


RepairFn = Callable[[SessionTree, str], str]


def refine_loop(
    tree: SessionTree,
    initial_response: str,
    validator: ValidatorConfig,
    repair: RepairFn,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> RefineOutcome:
    """Validate, then feed errors back for up to ``max_iterations`` repairs.

    ``repair(tree, feedback)`` must append one ValidatorFeedback and one
    Assistant message to the active branch and return the assistant text.
    Performs at most 1 + max_iterations validations and max_iterations
    repair calls.
    """
    if max_iterations < 1:
        raise InvalidConfigError("max_iterations must be >= 1")
    transcript: list[AttemptRecord] = []
    response_text = initial_response
    iterations = 0
    while True:
        try:
            attempt_text = extract_model_text(response_text)
        except EmptyModelError:
            attempt_text = ""
        if attempt_text:
            try:
                result = validate(attempt_text, validator)
            except SpawnFailureError as exc:
                transcript.append(AttemptRecord(attempt_text, -1, str(exc)))
                return RefineOutcome(
                    status=RefineStatus.VALIDATOR_ERROR,
                    iterations_used=iterations,
                    final_text=attempt_text,
                    transcript=transcript,
                )
            record = AttemptRecord(attempt_text, result["exit_code"], result["stderr"])
        else:
            # Nothing extractable counts as a failed attempt so the loop can
            # still ask for a repair.
            record = AttemptRecord("", -1, "no model text found in response")
        transcript.append(record)
        if record.exit_code in validator.success_exit_codes and attempt_text:
            return RefineOutcome(
                status=RefineStatus.VALID,
                iterations_used=iterations,
                final_text=attempt_text,
                transcript=transcript,
            )
        if iterations >= max_iterations:
            return RefineOutcome(
                status=RefineStatus.EXHAUSTED_ATTEMPTS,
                iterations_used=iterations,
                final_text=attempt_text,
                transcript=transcript,
            )
        feedback = FEEDBACK_TEMPLATE.format(stderr=record.stderr_excerpt)
        response_text = repair(tree, feedback)
        iterations += 1


def append_feedback(tree: SessionTree, feedback: str) -> str:
    """Record a validator-feedback message on the active branch."""
    return tree.append(Role.VALIDATOR_FEEDBACK, feedback)
