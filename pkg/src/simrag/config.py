"""TOML configuration loading for the service and CLI.

All keys are optional; defaults reproduce the reference runtime setup
(temperature 0, 8192-token context, 4 retrieved sources, 20-message
history window, localhost bind).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .corpus import DEFAULT_CHUNK_WORDS, DEFAULT_OVERLAP_WORDS, SourceCategory
from .engine import EngineConfig
from .errors import InvalidConfigError
from .index import EmbedderConfig, EmbedderProvider
from .llm import ProviderConfig, ProviderKind
from .refine import DEFAULT_MAX_ITERATIONS, ValidatorConfig
from .retrieval import RetrievalConfig, RetrievalMode
from .session import BudgetConfig

DEFAULT_BIND_ADDRESS = "127.0.0.1:8787"


@dataclass
class ServiceConfig:
    bind_address: str = DEFAULT_BIND_ADDRESS
    data_dir: Path = Path("./simrag-data")
    engine: EngineConfig = field(default_factory=lambda: EngineConfig(data_dir=Path("./simrag-data")))
    ui_dir: Path | None = None
    eval_row_limit: int = 500

    @property
    def host(self) -> str:
        return self.bind_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.bind_address.rsplit(":", 1)[1])


def parse_quotas(spec: str) -> dict[SourceCategory, int]:
    """Parse 'api-reference=1,input-example=2' into a quota map."""
    quotas: dict[SourceCategory, int] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        try:
            quotas[SourceCategory(name.strip())] = int(value)
        except ValueError as exc:
            raise InvalidConfigError(f"bad quota entry {part!r}") from exc
    return quotas


def _retrieval_from(table: dict) -> RetrievalConfig:
    quotas = table.get("quotas")
    if isinstance(quotas, str):
        quotas = parse_quotas(quotas)
    elif isinstance(quotas, dict):
        quotas = {SourceCategory(k): int(v) for k, v in quotas.items()}
    return RetrievalConfig(
        k_total=int(table.get("k_total", RetrievalConfig.k_total)),
        quotas=quotas,
        neighbor_radius=int(table.get("neighbor_radius", RetrievalConfig.neighbor_radius)),
        min_score=float(table.get("min_score", RetrievalConfig.min_score)),
        mode=RetrievalMode(table.get("mode", RetrievalConfig.mode.value)),
    )


def config_from_dict(data: dict, base_dir: Path = Path(".")) -> ServiceConfig:
    data_dir = Path(data.get("data_dir", "./simrag-data"))
    if not data_dir.is_absolute():
        data_dir = base_dir / data_dir

    provider_table = data.get("provider", {})
    provider = ProviderConfig(
        kind=ProviderKind(provider_table.get("kind", "stub")),
        base_url=provider_table.get("base_url"),
        retry_max=int(provider_table.get("retry_max", ProviderConfig.retry_max)),
        retry_backoff_ms=int(
            provider_table.get("retry_backoff_ms", ProviderConfig.retry_backoff_ms)
        ),
    )

    embedder_table = data.get("embedder", {})
    embedder = EmbedderConfig(
        provider=EmbedderProvider(embedder_table.get("provider", "builtin-hash")),
        dim=int(embedder_table.get("dim", EmbedderConfig.dim)),
        endpoint=embedder_table.get("endpoint") or None,
        model_name=embedder_table.get("model_name") or None,
    )

    budget_table = data.get("budget", {})
    budget = BudgetConfig(
        max_context_tokens=int(
            budget_table.get("max_context_tokens", BudgetConfig.max_context_tokens)
        ),
        history_window=int(budget_table.get("history_window", BudgetConfig.history_window)),
        reserve_for_response=int(
            budget_table.get("reserve_for_response", BudgetConfig.reserve_for_response)
        ),
    )

    validator = None
    validator_table = data.get("validator", {})
    if validator_table.get("command_template"):
        validator = ValidatorConfig(
            command_template=validator_table["command_template"],
            timeout_s=float(validator_table.get("timeout_s", 60.0)),
            success_exit_codes=frozenset(
                validator_table.get("success_exit_codes", [0])
            ),
            scratch_dir=validator_table.get("scratch_dir"),
        )

    corpus_table = data.get("corpus", {})
    engine = EngineConfig(
        data_dir=data_dir,
        software_name=data.get("software_name", "Pasimodo"),
        focus_system_prompt=bool(data.get("focus_system_prompt", True)),
        system_prompt_template=data.get("system_prompt_template"),
        llm_model=data.get("llm", {}).get("model", "stub"),
        chunk_words=int(corpus_table.get("chunk_words", DEFAULT_CHUNK_WORDS)),
        overlap_words=int(corpus_table.get("overlap_words", DEFAULT_OVERLAP_WORDS)),
        embedder=embedder,
        provider=provider,
        budget=budget,
        retrieval=_retrieval_from(data.get("retrieval", {})),
        validator=validator,
        refine_max_iterations=int(
            data.get("refine", {}).get("max_iterations", DEFAULT_MAX_ITERATIONS)
        ),
    )

    ui_dir = data.get("ui", {}).get("dir")
    return ServiceConfig(
        bind_address=data.get("bind_address", DEFAULT_BIND_ADDRESS),
        data_dir=data_dir,
        engine=engine,
        ui_dir=Path(ui_dir) if ui_dir else None,
        eval_row_limit=int(data.get("eval", {}).get("row_limit", 500)),
    )


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)
