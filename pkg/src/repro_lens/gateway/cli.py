"""Command-line entry point: one-shot runs and the HTTP service."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from ..orchestrator import RunConfig
from .jobs import JobService, JobStore
from .pipeline import MOCK_KERNEL, REAL_KERNEL, PipelineConfig, make_pipeline, run_one_shot

WORKDIR_ENV_VAR = "REPRO_LENS_WORKDIR"
PORT_ENV_VAR = "REPRO_LENS_PORT"


def default_workdir() -> Path:
    configured = os.environ.get(WORKDIR_ENV_VAR)
    if configured:
        return Path(configured)
    return Path.home() / ".repro-lens"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repro-lens", description="Notebook reproducibility analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="reproduce one repository and write the report")
    run.add_argument("url", help="repository URL (hosted or a local directory)")
    run.add_argument("--ref", default=None, help="branch, tag, or commit (default: host default branch)")
    run.add_argument("--out", default="repro-lens-out", help="output directory")
    run.add_argument("--format", choices=["json", "turtle", "both"], default="both")
    run.add_argument("--parallel", type=int, default=1, help="notebooks executed concurrently")
    run.add_argument("--cell-timeout", type=int, default=60_000, metavar="MS")
    run.add_argument("--notebook-timeout", type=int, default=300_000, metavar="MS")
    run.add_argument("--kernel", choices=[REAL_KERNEL, MOCK_KERNEL], default=REAL_KERNEL)
    run.add_argument("--workdir", default=None, help="environment cache root")

    serve = sub.add_parser("serve", help="start the HTTP service and dashboard")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--workers", type=int, default=2, help="concurrent jobs")
    serve.add_argument("--kernel", choices=[REAL_KERNEL, MOCK_KERNEL], default=REAL_KERNEL)
    serve.add_argument("--workdir", default=None)
    return parser


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    workdir = Path(args.workdir) if args.workdir else default_workdir()
    run_config = RunConfig(
        cell_timeout_ms=getattr(args, "cell_timeout", 60_000),
        notebook_timeout_ms=getattr(args, "notebook_timeout", 300_000),
        parallelism=getattr(args, "parallel", 1),
    )
    return PipelineConfig(kernel_mode=args.kernel, run=run_config, workdir=workdir)


def _print_summary(document: dict) -> None:
    summary = document["summary"]
    totals = summary["totals"]
    outcomes = summary["outcomes"]
    print(f"notebooks: {totals['notebooks']}  valid: {totals['valid']}  executed: {totals['executed']}")
    print(
        "outcomes: "
        f"same={outcomes.get('same_results', 0)} "
        f"different={outcomes.get('different_results', 0)} "
        f"exception={outcomes.get('exception', 0)} "
        f"not_executed={outcomes.get('not_executed', 0)}"
    )
    for kind, count in sorted(summary["exceptions_by_kind"].items()):
        print(f"exception[{kind}]: {count}")


def _cmd_run(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    try:
        document = run_one_shot(args.url, args.ref, Path(args.out), config, output_format=args.format)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _print_summary(document)
    print(f"report: {Path(args.out) / 'report.json'}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    workdir = Path(args.workdir) if args.workdir else default_workdir()
    store = JobStore(workdir / "jobs")
    config = _pipeline_config(args)
    service = JobService(store, make_pipeline(config), workers=args.workers)
    service.recover()
    service.start()

    frontend = _frontend_dist()
    app = create_app(service, frontend_dir=frontend)
    port = args.port if args.port is not None else int(os.environ.get(PORT_ENV_VAR, "8000"))
    try:
        uvicorn.run(app, host=args.host, port=port, log_level="info")
    finally:
        service.stop()
    return 0


def _frontend_dist() -> Optional[Path]:
    # repo layout: frontend/dist next to the installed package during development
    candidates = [
        Path(__file__).resolve().parents[3] / "frontend" / "dist",
        Path.cwd() / "frontend" / "dist",
    ]
    for candidate in candidates:
        if candidate.is_dir():
            return candidate
    return None


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
