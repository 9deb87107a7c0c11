"""Six-category prompt suite runner with deterministic scoring.

Scoring is substring/citation based: it measures retrieval grounding and
known hallucination markers, not full semantic correctness, so verdicts
are reproducible on any fixture corpus without expert review. Cases run
isolated (fresh session each) by default; chained mode replays the whole
suite in one session to expose chat-history influence.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    AbortedRunError,
    BadCategoryMappingError,
    DuplicateCaseIdError,
    ParseFailureError,
)

CASE_ID_RE = re.compile(r"^[1-6]\.[0-9]+$")

DEFAULT_SUITE_RESOURCE = "suites/table4.json"
HISTORY_CHAIN_SUITE_RESOURCE = "suites/history-chain.json"


class TaskCategory(str, enum.Enum):
    TEXT_EXTRACTION = "text-extraction"
    STRUCTURED_TEXT_EXTRACTION = "structured-text-extraction"
    COMPONENT_EXPLAINING = "component-explaining"
    MODEL_SUMMARIZATION = "model-summarization"
    COMPOSITIONAL_REASONING = "compositional-reasoning"
    MODEL_CREATION = "model-creation"

    @property
    def position(self) -> int:
        return list(TaskCategory).index(self) + 1

    @classmethod
    def from_position(cls, position: int) -> "TaskCategory":
        return list(cls)[position - 1]


class Verdict(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    ERROR = "Error"


@dataclass
class EvalCase:
    id: str
    category: TaskCategory
    prompt: str
    required_all: list[str] = field(default_factory=list)
    required_any: list[list[str]] = field(default_factory=list)
    forbidden: list[str] = field(default_factory=list)
    min_citations: int = 0
    attach_file: str | None = None

    @property
    def major(self) -> int:
        return int(self.id.split(".")[0])

    @property
    def minor(self) -> int:
        return int(self.id.split(".")[1])


def default_suite_path() -> Path:
    return Path(str(resources.files("simrag").joinpath(DEFAULT_SUITE_RESOURCE)))


def history_chain_suite_path() -> Path:
    return Path(str(resources.files("simrag").joinpath(HISTORY_CHAIN_SUITE_RESOURCE)))


def load_suite(path: str | Path) -> list[EvalCase]:
    """Parse and validate a suite file (JSON array of case objects)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseFailureError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ParseFailureError(f"{path}: suite must be a JSON array of cases")

    cases: list[EvalCase] = []
    seen: set[str] = set()
    for raw in data:
        case_id = str(raw.get("id", ""))
        if not CASE_ID_RE.match(case_id):
            raise BadCategoryMappingError(f"case id {case_id!r} is not <1-6>.<n>")
        if case_id in seen:
            raise DuplicateCaseIdError(f"duplicate case id {case_id}")
        seen.add(case_id)
        try:
            category = TaskCategory(raw["category"])
        except (KeyError, ValueError) as exc:
            raise BadCategoryMappingError(
                f"case {case_id}: unknown category {raw.get('category')!r}"
            ) from exc
        major = int(case_id.split(".")[0])
        if category.position != major:
            raise BadCategoryMappingError(
                f"case {case_id}: major number {major} does not match "
                f"category {category.value} (position {category.position})"
            )
        attach = raw.get("attach_file")
        if attach:
            attach = str((path.parent / attach).resolve())
        cases.append(
            EvalCase(
                id=case_id,
                category=category,
                prompt=raw["prompt"],
                required_all=list(raw.get("required_all", [])),
                required_any=[list(group) for group in raw.get("required_any", [])],
                forbidden=list(raw.get("forbidden", [])),
                min_citations=int(raw.get("min_citations", 0)),
                attach_file=attach,
            )
        )
    return cases


def score_response(case: EvalCase, response: str, citations: list) -> tuple[Verdict, list[str]]:
    """Case-insensitive substring checks plus a citation-count floor."""
    failed: list[str] = []
    haystack = response.lower()
    for needle in case.required_all:
        if needle.lower() not in haystack:
            failed.append(f"required_all: {needle!r} not found")
    for group in case.required_any:
        if not any(member.lower() in haystack for member in group):
            failed.append(f"required_any: none of {group!r} found")
    for needle in case.forbidden:
        if needle.lower() in haystack:
            failed.append(f"forbidden: {needle!r} found")
    if len(citations) < case.min_citations:
        failed.append(f"min_citations: saw {len(citations)}, need {case.min_citations}")
    return (Verdict.PASS if not failed else Verdict.FAIL), failed


def _case_sort_key(case: EvalCase) -> tuple[int, int]:
    return (case.major, case.minor)


def report_digest(report: dict) -> str:
    """Stable digest over verdict-relevant content; latencies excluded."""
    stable = {
        "per_case": [
            {k: v for k, v in row.items() if k != "latency_ms"}
            for row in report["per_case"]
        ],
        "per_category": report["per_category"],
        "config_digest": report["config_digest"],
    }
    return hashlib.sha256(json.dumps(stable, sort_keys=True).encode("utf-8")).hexdigest()


def run_suite(
    cases: list[EvalCase],
    engine,
    out_path: str | Path | None = None,
    chained: bool = False,
    row_limit: int | None = None,
) -> dict:
    """Execute cases in id order, single-threaded, and write the report.

    Per-case failures are recorded as verdict Error and the run continues;
    only a missing corpus/index aborts. ``chained`` replays all cases in
    one session instead of a fresh session per case.
    """
    if len(engine.index) == 0:
        raise AbortedRunError("corpus/index is empty; ingest documents first")
    if row_limit is not None and len(cases) > row_limit:
        raise AbortedRunError(f"suite has {len(cases)} cases, limit is {row_limit}")

    ordered = sorted(cases, key=_case_sort_key)
    shared_tree = engine.new_session() if chained else None
    per_case = []
    totals: dict[str, list[int]] = {}
    for case in ordered:
        counts = totals.setdefault(case.category.value, [0, 0])
        counts[1] += 1
        started = time.monotonic()
        try:
            prompt = case.prompt
            if case.attach_file:
                prompt = prompt + "\n\n" + Path(case.attach_file).read_text(encoding="utf-8")
            tree = shared_tree if chained else engine.new_session()
            result = engine.chat(tree, prompt)
            verdict, failed = score_response(case, result.assistant_text, result.citations)
            citations_seen = len(result.citations)
        except Exception as exc:  # per-case isolation
            verdict, failed = Verdict.ERROR, [f"error: {type(exc).__name__}: {exc}"]
            citations_seen = 0
        latency_ms = int((time.monotonic() - started) * 1000)
        if verdict is Verdict.PASS:
            counts[0] += 1
        per_case.append(
            {
                "id": case.id,
                "verdict": verdict.value,
                "failed_checks": failed,
                "citations_seen": citations_seen,
                "latency_ms": latency_ms,
            }
        )

    per_category = [
        {"category": category.value, "passed": totals[category.value][0], "total": totals[category.value][1]}
        for category in TaskCategory
        if category.value in totals
    ]
    report = {
        "per_case": per_case,
        "per_category": per_category,
        "config_digest": engine.config_digest(),
    }
    report["digest"] = report_digest(report)

    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(
            json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        out_path.with_suffix(".txt").write_text(render_report_table(report), encoding="utf-8")
    return report


def render_report_table(report: dict) -> str:
    """One row per case plus per-category passed/total lines."""
    lines = [f"{'case':<8}{'verdict':<8}{'cites':>6}  failed checks"]
    for row in report["per_case"]:
        checks = "; ".join(row["failed_checks"]) if row["failed_checks"] else "-"
        lines.append(
            f"{row['id']:<8}{row['verdict']:<8}{row['citations_seen']:>6}  {checks}"
        )
    lines.append("")
    for row in report["per_category"]:
        lines.append(f"{row['category']}: {row['passed']}/{row['total']}")
    lines.append("")
    lines.append(f"config digest: {report['config_digest']}")
    lines.append(f"report digest: {report['digest']}")
    return "\n".join(lines) + "\n"
