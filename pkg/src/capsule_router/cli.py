"""Command line: ``serve``, ``validate`` and ``bench router``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from .bench import emit_report, load_suite, run_router_suite
from .capsule import sandbox_result_to_dict
from .catalog import open_catalog
from .errors import ForgeError
from .executor import BundleExecutor
from .mcp_surface import McpServer
from .router import DEFAULT_PROFILE_ID, Router
from .validator import (
    PatternSpec,
    bundle_contract,
    load_bundle_dir,
    run_sandbox,
    run_structural_review,
    score_patterns,
)

EMIT_FORMATS = {"table": "table_text", "csv": "csv", "jsonl": "jsonl"}


def _read_json(path: str) -> object:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_serve(args: argparse.Namespace) -> int:
    catalog = open_catalog(args.root)
    for tool_id, err in sorted(catalog.quarantined.items()):
        logging.warning("quarantined %s: %s", tool_id, err.code)
    router = Router(catalog, root=args.root)
    router.profile(args.profile)  # fail fast on an unknown profile
    McpServer(router, args.profile, BundleExecutor(catalog)).serve(sys.stdin, sys.stdout)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    bundle = load_bundle_dir(args.bundle)
    contract = bundle_contract(args.bundle, bundle)
    findings = run_structural_review(bundle, contract)
    score = score_patterns(bundle, PatternSpec.from_dict(_read_json(args.patterns)))
    inputs = _read_json(args.inputs) if args.inputs else {}
    sandbox = run_sandbox(args.bundle, inputs=inputs)
    report = {
        "tool": contract.name,
        "findings": [asdict(f) for f in findings],
        "patterns": {
            "tp": score.tp, "fp": score.fp, "fn": score.fn,
            "precision": score.precision, "recall": score.recall, "f1": score.f1,
            "details": [asdict(h) for h in score.details],
        },
        "sandbox": sandbox_result_to_dict(sandbox),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    clean = not any(f.severity == "error" for f in findings)
    return 0 if clean and score.fp == score.fn == 0 and sandbox.status == "passed" else 1


def cmd_bench_router(args: argparse.Namespace) -> int:
    suite = load_suite(args.suite)
    report = run_router_suite(suite, suite.build_catalog())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = EMIT_FORMATS[args.emit]
    if fmt == "jsonl":
        (out / f"{suite.suite}.jsonl").write_text(emit_report(report, "jsonl"), encoding="utf-8")
    else:
        ext = "csv" if fmt == "csv" else "txt"
        for table in ("results", "exposure"):
            (out / f"{suite.suite}.{table}.{ext}").write_text(emit_report(report, fmt, table), encoding="utf-8")
    sys.stdout.write(emit_report(report, "table_text"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capsule-router", description=__doc__)
    parser.add_argument("--log-level", default="WARNING", help="Logging level for stderr (default WARNING).")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="Serve the router meta-tools over stdio JSON-RPC.")
    serve.add_argument("--root", required=True, help="Catalog root directory.")
    serve.add_argument("--profile", default=DEFAULT_PROFILE_ID, help="Default governance profile.")
    serve.set_defaults(func=cmd_serve)

    validate = sub.add_parser("validate", help="Review, pattern-score and sandbox-run a bundle directory.")
    validate.add_argument("--bundle", required=True, help="Bundle directory.")
    validate.add_argument("--patterns", required=True, help="PatternSpec JSON file.")
    validate.add_argument("--inputs", help="JSON object mapping credential aliases to values.")
    validate.set_defaults(func=cmd_validate)

    bench = sub.add_parser("bench", help="Benchmarks.")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    router = bench_sub.add_parser("router", help="Run a router suite and write reports.")
    router.add_argument("--suite", required=True, help="Suite JSON file.")
    router.add_argument("--emit", choices=sorted(EMIT_FORMATS), default="table", help="Report format.")
    router.add_argument("--out", required=True, help="Output directory.")
    router.set_defaults(func=cmd_bench_router)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ForgeError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
