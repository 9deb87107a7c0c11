"""Command-line interface: ingest, query, serve, eval run."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ServiceConfig, config_from_dict, load_config, parse_quotas
from .corpus import DocumentFormat, SourceCategory
from .engine import RagEngine
from .errors import SimragError
from .retrieval import RetrievalConfig, RetrievalMode


def _service_config(args: argparse.Namespace) -> ServiceConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = config_from_dict({})
    if getattr(args, "data_dir", None):
        config.data_dir = Path(args.data_dir)
        config.engine.data_dir = Path(args.data_dir)
    return config


def cmd_ingest(args: argparse.Namespace) -> int:
    engine = RagEngine(_service_config(args).engine)
    fmt = DocumentFormat(args.format) if args.format else None
    doc, chunks = engine.ingest(args.path, SourceCategory(args.category), fmt)
    print(f"ingested {doc.source_path} as {doc.category.value}: "
          f"doc {doc.id}, {len(chunks)} chunks, {doc.word_count} words")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    config = _service_config(args)
    engine = RagEngine(config.engine)
    retrieval = RetrievalConfig(
        k_total=args.k,
        quotas=parse_quotas(args.quota) if args.quota else None,
        neighbor_radius=args.radius,
        min_score=args.min_score,
        mode=RetrievalMode(args.mode),
    )
    results, citations = engine.query(args.prompt, retrieval)
    for citation in citations:
        print(f"[{citation['category']}] {citation['doc_path']}#{citation['ordinal']} "
              f"score={citation['score']:.4f}")
    for result in results:
        chunk = engine.corpus.get_chunk(result.chunk_id)
        print(f"\n--- {result.chunk_id} ({result.origin.value}) ---")
        print(chunk.text if chunk else "<missing>")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = _service_config(args)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    from . import evalharness
    from .llm import ProviderConfig, ProviderKind

    config = _service_config(args)
    if args.provider:
        config.engine.provider = ProviderConfig(kind=ProviderKind(args.provider))
    engine = RagEngine(config.engine)
    suite_path = Path(args.suite) if args.suite else evalharness.default_suite_path()
    cases = evalharness.load_suite(suite_path)
    report = evalharness.run_suite(cases, engine, out_path=args.out, chained=args.chained)
    print(evalharness.render_report_table(report))
    failed = sum(1 for row in report["per_case"] if row["verdict"] != "Pass")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simrag")
    parser.add_argument("--config", help="path to a simrag.toml config file")
    parser.add_argument("--data-dir", help="override the data directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest a document into the corpus")
    p_ingest.add_argument("path")
    p_ingest.add_argument(
        "--category", required=True, choices=[c.value for c in SourceCategory]
    )
    p_ingest.add_argument(
        "--format", choices=[f.value for f in DocumentFormat],
        help="auto-detected from the extension when omitted",
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_query = sub.add_parser("query", help="retrieve context for a prompt")
    p_query.add_argument("prompt")
    p_query.add_argument("--mode", default="flat", choices=[m.value for m in RetrievalMode])
    p_query.add_argument("--k", type=int, default=RetrievalConfig.k_total)
    p_query.add_argument("--radius", type=int, default=RetrievalConfig.neighbor_radius)
    p_query.add_argument("--min-score", type=float, default=RetrievalConfig.min_score)
    p_query.add_argument("--quota", help="e.g. api-reference=1,input-example=1")
    p_query.set_defaults(func=cmd_query)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.set_defaults(func=cmd_serve)

    p_eval = sub.add_parser("eval", help="evaluation harness")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_run = eval_sub.add_parser("run", help="run a prompt suite")
    p_run.add_argument("--suite", help="suite JSON path (default: bundled table4)")
    p_run.add_argument("--chained", action="store_true",
                       help="replay all cases in one session")
    p_run.add_argument("--provider", choices=["stub", "http"])
    p_run.add_argument("--out", default="report.json")
    p_run.set_defaults(func=cmd_eval_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimragError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error [not_found]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
