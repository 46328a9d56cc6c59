"""The reproduction pipeline shared by the job workers and the one-shot CLI."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..environment import EnvironmentManager, RecordingProvisioner, SubprocessProvisioner
from ..ingest import GitHubApi, fetch_repository
from ..kernel.loopback import LoopbackLauncher
from ..kernel.zmq_transport import SubprocessKernelLauncher
from ..orchestrator import ProgressEvents, RepoRunReport, RunConfig, RunOrchestrator
from ..provenance import (
    ProvenanceGraph,
    default_run_id,
    export_prospective,
    export_repository,
    export_retrospective,
    serialize_turtle,
)
from .jobs import JobRecord, JobState, JobStore
from .report import build_report_document

MOCK_KERNEL = "mock"
REAL_KERNEL = "real"


@dataclass
class PipelineConfig:
    kernel_mode: str = MOCK_KERNEL
    run: RunConfig = field(default_factory=RunConfig)
    api: Optional[GitHubApi] = None
    workdir: Optional[Path] = None  # environment cache location for real mode

    def build_backend(self) -> tuple[EnvironmentManager, object]:
        if self.kernel_mode == REAL_KERNEL:
            workdir = self.workdir or Path.cwd() / ".repro-lens"
            return (
                EnvironmentManager(SubprocessProvisioner(workdir)),
                SubprocessKernelLauncher(),
            )
        return EnvironmentManager(RecordingProvisioner()), LoopbackLauncher()


def notebook_turtle_documents(report: RepoRunReport) -> list[tuple[int, str, ProvenanceGraph]]:
    """(index, path, prospective+retrospective graph) per scanned notebook."""
    documents: list[tuple[int, str, ProvenanceGraph]] = []
    for index, entry in enumerate(report.entries):
        graph = ProvenanceGraph()
        if entry.notebook is not None:
            graph.merge(export_prospective(entry.notebook, repo_ref=report.ref))
        if entry.record is not None:
            run_id = default_run_id(entry.record)
            graph.merge(export_retrospective(entry.record, repo_ref=report.ref, run_id=run_id))
        documents.append((index, entry.path, graph))
    return documents


def execute_job(record: JobRecord, store: JobStore, config: PipelineConfig) -> None:
    """Drive one job through fetch, execution, evaluation, and export."""
    job_id = record.job_id
    store.transition(job_id, JobState.FETCHING)
    snapshot = fetch_repository(record.url, record.ref, store.work_dir(job_id), api=config.api)

    store.transition(job_id, JobState.PROVISIONING)
    env_manager, launcher = config.build_backend()

    def on_notebook_started(path: str) -> None:
        store.transition(job_id, JobState.EXECUTING, detail=path)

    orchestrator = RunOrchestrator(
        env_manager,
        launcher,
        config=config.run,
        events=ProgressEvents(notebook_started=on_notebook_started),
    )
    store.transition(job_id, JobState.EXECUTING)
    report = orchestrator.reproduce_repository(snapshot)

    document = build_report_document(report)
    graphs: list[ProvenanceGraph] = []
    for index, _path, graph in notebook_turtle_documents(report):
        store.write_turtle(job_id, index, serialize_turtle(graph))
        graphs.append(graph)
    store.write_repo_turtle(job_id, serialize_turtle(export_repository(report, graphs)))
    store.write_report(job_id, document)
    store.transition(job_id, JobState.COMPLETED)


def make_pipeline(config: PipelineConfig):
    def pipeline(record: JobRecord, store: JobStore) -> None:
        try:
            execute_job(record, store, config)
        except Exception as exc:  # noqa: BLE001 - job failures are terminal states
            store.transition(record.job_id, JobState.FAILED, detail=f"{type(exc).__name__}: {exc}")

    return pipeline


def run_one_shot(
    url: str,
    ref: Optional[str],
    out_dir: Path,
    config: PipelineConfig,
    output_format: str = "both",
) -> dict:
    """CLI path: same artifacts as a service job, written under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = fetch_repository(url, ref, out_dir / "work", api=config.api)
    env_manager, launcher = config.build_backend()
    orchestrator = RunOrchestrator(env_manager, launcher, config=config.run)
    report = orchestrator.reproduce_repository(snapshot)
    document = build_report_document(report)
    if output_format in ("json", "both"):
        (out_dir / "report.json").write_text(
            json.dumps(document, ensure_ascii=False, indent=1, sort_keys=True), encoding="utf-8"
        )
    if output_format in ("turtle", "both"):
        graphs = []
        for index, _path, graph in notebook_turtle_documents(report):
            target = out_dir / "prov" / "notebooks" / str(index)
            target.mkdir(parents=True, exist_ok=True)
            (target / "prov.ttl").write_text(serialize_turtle(graph), encoding="utf-8")
            graphs.append(graph)
        (out_dir / "prov").mkdir(parents=True, exist_ok=True)
        (out_dir / "prov" / "repository.ttl").write_text(
            serialize_turtle(export_repository(report, graphs)), encoding="utf-8"
        )
    return document
