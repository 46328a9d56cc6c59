"""End-to-end reproduction of one repository: environment, kernel, cells.

Code cells run strictly in document order and execution halts at the first
error or timeout; whatever happened is recorded as retrospective provenance,
and the kernel is always shut down, even on failure paths.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import PurePosixPath
from threading import Lock
from typing import Callable, Optional

from .environment import EnvError, EnvironmentManager, _major_minor, plan_environment
from .ingest import RepositorySnapshot, discover_environment, scan_notebooks
from .kernel.session import (
    CellExecutionResult,
    CellStatus,
    HandshakeTimeout,
    KernelLaunchFailed,
    SessionConfig,
    SessionDead,
    start_kernel,
)
from .kernel.transport import KernelLauncher
from .notebook import Notebook, Output, ValidityReport, validate


class TerminalKind(Enum):
    COMPLETED = "completed"
    HALTED_ON_ERROR = "halted_on_error"
    TIMED_OUT = "timed_out"
    NOT_EXECUTED = "not_executed"


@dataclass(frozen=True)
class TerminalStatus:
    kind: TerminalKind
    cell_index: Optional[int] = None
    reason: Optional[str] = None

    @staticmethod
    def completed() -> "TerminalStatus":
        return TerminalStatus(TerminalKind.COMPLETED)

    @staticmethod
    def halted_on_error(cell_index: int) -> "TerminalStatus":
        return TerminalStatus(TerminalKind.HALTED_ON_ERROR, cell_index=cell_index)

    @staticmethod
    def timed_out(cell_index: int) -> "TerminalStatus":
        return TerminalStatus(TerminalKind.TIMED_OUT, cell_index=cell_index)

    @staticmethod
    def not_executed(reason: str) -> "TerminalStatus":
        return TerminalStatus(TerminalKind.NOT_EXECUTED, reason=reason)


class FidelityFlag(Enum):
    INTERPRETER_FALLBACK = "interpreter_fallback"
    NO_MANIFEST = "no_manifest"
    DEFAULT_INTERPRETER = "default_interpreter"


@dataclass(frozen=True)
class NotebookRunRecord:
    path: str
    env_id: str
    interpreter_version_used: str
    fidelity_flags: frozenset[FidelityFlag]
    cell_records: tuple[tuple[int, CellExecutionResult], ...]
    terminal_status: TerminalStatus
    started_at: datetime
    ended_at: datetime


@dataclass(frozen=True)
class RepoEntry:
    path: str
    notebook: Optional[Notebook]
    parse_error: Optional[str]
    validity: Optional[ValidityReport]
    record: Optional[NotebookRunRecord]


@dataclass(frozen=True)
class RepoRunReport:
    url: str
    ref: str
    entries: tuple[RepoEntry, ...]
    started_at: datetime
    ended_at: datetime


@dataclass
class RunConfig:
    cell_timeout_ms: int = 60_000
    notebook_timeout_ms: int = 300_000
    parallelism: int = 1
    supported_languages: frozenset[str] = frozenset({"python"})
    session: SessionConfig = field(default_factory=SessionConfig)


def _noop(*_args) -> None:
    return None


@dataclass
class ProgressEvents:
    notebook_started: Callable[[str], None] = _noop
    cell_finished: Callable[[str, int, str], None] = _noop
    notebook_finished: Callable[[str, TerminalStatus], None] = _noop


def _not_executed_record(path: str, reason: str, env_id: str = "", interpreter: str = "") -> NotebookRunRecord:
    now = datetime.now(timezone.utc)
    return NotebookRunRecord(
        path=path,
        env_id=env_id,
        interpreter_version_used=interpreter,
        fidelity_flags=frozenset(),
        cell_records=(),
        terminal_status=TerminalStatus.not_executed(reason),
        started_at=now,
        ended_at=now,
    )


def _as_error_result(result: CellExecutionResult, ename: str, evalue: str) -> CellExecutionResult:
    """Append a synthesized error output so the halted record is well-formed."""
    outputs = tuple(result.outputs) + (Output.error(ename, evalue),)
    return replace(result, status=CellStatus.ERROR, outputs=outputs)


class RunOrchestrator:
    def __init__(
        self,
        env_manager: EnvironmentManager,
        launcher: KernelLauncher,
        config: RunConfig | None = None,
        events: ProgressEvents | None = None,
    ) -> None:
        self.env_manager = env_manager
        self.launcher = launcher
        self.config = config or RunConfig()
        self.events = events or ProgressEvents()

    def reproduce_notebook(self, nb: Notebook, snapshot: RepositorySnapshot) -> NotebookRunRecord:
        """Execute one notebook under a freshly planned environment.

        Total given infrastructure: every failure mode is encoded in the
        returned record's terminal status, never raised.
        """
        path = nb.source_path
        started = datetime.now(timezone.utc)
        validity = validate(nb)
        if not validity.overall_valid:
            missing = []
            if not validity.has_valid_format:
                missing.append("nbformat")
            if not validity.has_kernel_spec:
                missing.append("kernel specification")
            if not validity.has_language_version:
                missing.append("language version")
            return _not_executed_record(path, f"invalid notebook ({', '.join(missing)})")
        language = (nb.language_name or "").lower()
        if language not in self.config.supported_languages:
            return _not_executed_record(path, f"unsupported language: {nb.language_name or 'unknown'}")

        manifests = discover_environment(snapshot)
        plan = plan_environment(manifests, nb, snapshot)
        flags: set[FidelityFlag] = set()
        if not manifests:
            flags.add(FidelityFlag.NO_MANIFEST)
        if plan.interpreter_defaulted:
            flags.add(FidelityFlag.DEFAULT_INTERPRETER)
        try:
            env = self.env_manager.provision(plan)
        except EnvError as exc:
            return _not_executed_record(path, f"environment provisioning failed: {exc}", env_id=plan.env_id)
        if _major_minor(env.actual_interpreter_version) != plan.interpreter_version:
            flags.add(FidelityFlag.INTERPRETER_FALLBACK)

        cwd = (snapshot.root / PurePosixPath(path)).parent
        try:
            session = start_kernel(env, nb.kernel_spec, self.launcher, cwd, self.config.session)
        except (KernelLaunchFailed, HandshakeTimeout) as exc:
            return _not_executed_record(
                path, f"kernel start failed: {exc}", env_id=env.env_id, interpreter=env.actual_interpreter_version
            )

        records: list[tuple[int, CellExecutionResult]] = []
        terminal = TerminalStatus.completed()
        notebook_deadline = time.monotonic() + self.config.notebook_timeout_ms / 1000.0
        try:
            for cell in nb.code_cells():
                remaining_ms = int((notebook_deadline - time.monotonic()) * 1000)
                if remaining_ms <= 0:
                    terminal = TerminalStatus.timed_out(cell.index)
                    break
                timeout_ms = min(self.config.cell_timeout_ms, remaining_ms)
                try:
                    result = session.execute(cell.source, timeout_ms)
                except SessionDead as exc:
                    result = _as_error_result(
                        CellExecutionResult(
                            status=CellStatus.ERROR,
                            outputs=(),
                            execution_count=None,
                            started_at=datetime.now(timezone.utc),
                            ended_at=datetime.now(timezone.utc),
                        ),
                        "KernelDied",
                        str(exc),
                    )
                if result.status is CellStatus.ABORTED:
                    result = _as_error_result(result, "ExecutionAborted", "kernel aborted the request")
                records.append((cell.index, result))
                self.events.cell_finished(path, cell.index, result.status.value)
                if result.status is CellStatus.ERROR:
                    terminal = TerminalStatus.halted_on_error(cell.index)
                    break
                if result.status is CellStatus.TIMEOUT:
                    terminal = TerminalStatus.timed_out(cell.index)
                    break
        finally:
            session.shutdown()

        return NotebookRunRecord(
            path=path,
            env_id=env.env_id,
            interpreter_version_used=env.actual_interpreter_version,
            fidelity_flags=frozenset(flags),
            cell_records=tuple(records),
            terminal_status=terminal,
            started_at=started,
            ended_at=datetime.now(timezone.utc),
        )

    def reproduce_repository(self, snapshot: RepositorySnapshot) -> RepoRunReport:
        """Process every scanned notebook; per-notebook failures are data."""
        started = datetime.now(timezone.utc)
        scanned = scan_notebooks(snapshot)
        entries: dict[str, RepoEntry] = {}
        entries_lock = Lock()

        def process(item: tuple[str, object]) -> None:
            path, parsed = item
            self.events.notebook_started(path)
            if isinstance(parsed, Notebook):
                record = self.reproduce_notebook(parsed, snapshot)
                entry = RepoEntry(
                    path=path,
                    notebook=parsed,
                    parse_error=None,
                    validity=validate(parsed),
                    record=record,
                )
            else:
                entry = RepoEntry(
                    path=path,
                    notebook=None,
                    parse_error=str(parsed),
                    validity=None,
                    record=_not_executed_record(path, f"parse error: {parsed}"),
                )
            with entries_lock:
                entries[path] = entry
            self.events.notebook_finished(path, entry.record.terminal_status if entry.record else TerminalStatus.not_executed("missing"))

        if self.config.parallelism <= 1:
            for item in scanned:
                process(item)
        else:
            with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
                list(pool.map(process, scanned))

        ordered = tuple(entries[path] for path, _ in scanned)
        return RepoRunReport(
            url=snapshot.url,
            ref=snapshot.ref,
            entries=ordered,
            started_at=started,
            ended_at=datetime.now(timezone.utc),
        )
