"""Durable jobs: an append-only journal per job plus a bounded worker pool.

Each job directory holds ``journal.ndjson`` (state transitions, one JSON
object per line), the result document, and the provenance exports. State is
reconstructed by replaying the journal; a torn final line (crash mid-write)
is ignored, so a killed service restarts cleanly.
"""

from __future__ import annotations

import json
import os
import queue
import secrets
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional


class JobNotFound(Exception):
    pass


class JobNotFinished(Exception):
    pass


class InvalidUrl(Exception):
    pass


class JobState(Enum):
    QUEUED = "queued"
    FETCHING = "fetching"
    PROVISIONING = "provisioning"
    EXECUTING = "executing"
    COMPLETED = "completed"
    FAILED = "failed"


_STATE_RANK = {
    JobState.QUEUED: 0,
    JobState.FETCHING: 1,
    JobState.PROVISIONING: 2,
    JobState.EXECUTING: 3,
    JobState.COMPLETED: 4,
    JobState.FAILED: 4,
}

TERMINAL_STATES = {JobState.COMPLETED, JobState.FAILED}

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_ulid(now_ms: Optional[int] = None) -> str:
    """26-char Crockford-base32 ULID: 48-bit timestamp + 80 random bits."""
    timestamp = now_ms if now_ms is not None else int(time.time() * 1000)
    value = (timestamp & ((1 << 48) - 1)) << 80 | secrets.randbits(80)
    chars = []
    for _ in range(26):
        chars.append(_CROCKFORD[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    url: str
    ref: Optional[str]
    state: JobState
    detail: Optional[str]
    created_at: str
    updated_at: str

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "url": self.url,
            "ref": self.ref,
            "state": self.state.value,
            "detail": self.detail,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class JobStore:
    """Journaled job state under ``root/<job_id>/``."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    # --- paths ---------------------------------------------------------------

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def journal_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "journal.ndjson"

    def report_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "report.json"

    def prov_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "prov"

    def work_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "work"

    # --- journal -------------------------------------------------------------

    def _append(self, job_id: str, entry: dict) -> None:
        path = self.journal_path(job_id)
        line = json.dumps(entry, ensure_ascii=False)
        with self._write_lock:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())

    def create(self, url: str, ref: Optional[str]) -> JobRecord:
        job_id = new_ulid()
        self.job_dir(job_id).mkdir(parents=True, exist_ok=True)
        now = _now_iso()
        self._append(
            job_id,
            {"at": now, "state": JobState.QUEUED.value, "url": url, "ref": ref},
        )
        return JobRecord(job_id, url, ref, JobState.QUEUED, None, now, now)

    def transition(self, job_id: str, state: JobState, detail: Optional[str] = None) -> None:
        """Append a transition; never moves a job backwards."""
        current = self.load(job_id)
        if _STATE_RANK[state] < _STATE_RANK[current.state]:
            raise ValueError(f"job {job_id}: cannot move {current.state.value} -> {state.value}")
        if current.state in TERMINAL_STATES and state is not current.state:
            raise ValueError(f"job {job_id}: already terminal ({current.state.value})")
        self._append(job_id, {"at": _now_iso(), "state": state.value, "detail": detail})

    def load(self, job_id: str) -> JobRecord:
        path = self.journal_path(job_id)
        if not path.exists():
            raise JobNotFound(job_id)
        url = ""
        ref: Optional[str] = None
        state = JobState.QUEUED
        detail: Optional[str] = None
        created_at = ""
        updated_at = ""
        for raw_line in path.read_text(encoding="utf-8").splitlines():
            raw_line = raw_line.strip()
            if not raw_line:
                continue
            try:
                entry = json.loads(raw_line)
            except json.JSONDecodeError:
                continue  # torn tail from a crash mid-append: ignore
            try:
                entry_state = JobState(entry.get("state"))
            except ValueError:
                continue
            if not created_at:
                created_at = entry.get("at", "")
                url = entry.get("url", "")
                ref = entry.get("ref")
            state = entry_state
            detail = entry.get("detail")
            updated_at = entry.get("at", updated_at)
        if not created_at:
            raise JobNotFound(job_id)
        return JobRecord(job_id, url, ref, state, detail, created_at, updated_at)

    def list_ids(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(d.name for d in self.root.iterdir() if (d / "journal.ndjson").exists())

    # --- results ---------------------------------------------------------------

    def write_report(self, job_id: str, document: dict) -> None:
        path = self.report_path(job_id)
        tmp = path.with_suffix(".json.tmp")
        payload = json.dumps(document, ensure_ascii=False, indent=1, sort_keys=True)
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    def read_report_bytes(self, job_id: str) -> bytes:
        path = self.report_path(job_id)
        if not path.exists():
            raise JobNotFinished(job_id)
        return path.read_bytes()

    def write_turtle(self, job_id: str, notebook_index: int, text: str) -> Path:
        directory = self.prov_dir(job_id) / "notebooks" / str(notebook_index)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "prov.ttl"
        path.write_text(text, encoding="utf-8")
        return path

    def write_repo_turtle(self, job_id: str, text: str) -> Path:
        directory = self.prov_dir(job_id)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "repository.ttl"
        path.write_text(text, encoding="utf-8")
        return path

    def turtle_path(self, job_id: str, notebook_index: int) -> Path:
        return self.prov_dir(job_id) / "notebooks" / str(notebook_index) / "prov.ttl"


Pipeline = Callable[[JobRecord, JobStore], None]


class JobService:
    """FIFO queue over a bounded worker pool, durable across restarts."""

    def __init__(self, store: JobStore, pipeline: Pipeline, workers: int = 2) -> None:
        self.store = store
        self.pipeline = pipeline
        self.workers = max(1, workers)
        self._queue: queue.Queue[Optional[str]] = queue.Queue()
        self._threads: list[threading.Thread] = []
        self._active: dict[tuple[str, str], str] = {}  # (url, ref or "") -> job_id
        self._active_lock = threading.Lock()
        self._started = False

    # --- lifecycle -------------------------------------------------------------

    def recover(self) -> list[str]:
        """Mark jobs interrupted by a previous crash as Failed; returns them."""
        interrupted = []
        for job_id in self.store.list_ids():
            record = self.store.load(job_id)
            if record.state not in TERMINAL_STATES:
                self.store.transition(job_id, JobState.FAILED, detail="interrupted by service restart")
                interrupted.append(job_id)
        return interrupted

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for n in range(self.workers):
            thread = threading.Thread(target=self._work, name=f"job-worker-{n}", daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        if not self._started:
            return
        for _ in self._threads:
            self._queue.put(None)
        for thread in self._threads:
            thread.join(timeout=10)
        self._threads.clear()
        self._started = False

    def _work(self) -> None:
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            try:
                record = self.store.load(job_id)
                self.pipeline(record, self.store)
            except Exception as exc:  # noqa: BLE001 - worker must survive anything
                try:
                    self.store.transition(job_id, JobState.FAILED, detail=str(exc))
                except Exception:
                    pass
            finally:
                final = None
                try:
                    final = self.store.load(job_id)
                except Exception:
                    pass
                if final is not None and final.state not in TERMINAL_STATES:
                    try:
                        self.store.transition(job_id, JobState.FAILED, detail="pipeline ended without a terminal state")
                    except Exception:
                        pass
                with self._active_lock:
                    for key, active_id in list(self._active.items()):
                        if active_id == job_id:
                            del self._active[key]

    # --- API surface -------------------------------------------------------------

    def submit(self, url: str, ref: Optional[str] = None) -> str:
        """Persist a job and enqueue it; idempotent while a twin is active."""
        from ..ingest import InvalidRepoUrl, parse_repo_url

        try:
            parse_repo_url(url)
        except InvalidRepoUrl as exc:
            raise InvalidUrl(str(exc)) from exc
        key = (url, ref or "")
        with self._active_lock:
            existing = self._active.get(key)
            if existing is not None:
                try:
                    record = self.store.load(existing)
                    if record.state not in TERMINAL_STATES:
                        return existing
                except JobNotFound:
                    pass
            record = self.store.create(url, ref)
            self._active[key] = record.job_id
        self._queue.put(record.job_id)
        return record.job_id

    def status(self, job_id: str) -> JobRecord:
        return self.store.load(job_id)

    def report_bytes(self, job_id: str) -> bytes:
        record = self.store.load(job_id)  # raises JobNotFound
        if record.state is not JobState.COMPLETED:
            raise JobNotFinished(job_id)
        return self.store.read_report_bytes(job_id)
