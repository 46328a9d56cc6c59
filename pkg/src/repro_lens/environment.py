"""Environment planning and provisioning.

A plan is content-addressed: the same snapshot, interpreter request, and
manifest contents always hash to the same env id, so provisioned
environments are reusable across notebooks and jobs. Provisioning itself is
behind a small contract with two implementations: one that shells out to
real tooling (venv/pip, conda or pipenv when present) and a recording double
for tests and mock-kernel runs.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from .ingest import ManifestKind, ManifestRef, RepositorySnapshot
from .notebook import Notebook


class EnvError(Exception):
    pass


class InterpreterUnavailable(EnvError):
    pass


class ProvisionFailed(EnvError):
    def __init__(self, step: tuple[str, str], log: str) -> None:
        super().__init__(f"install step {step} failed")
        self.step = step
        self.log = log


_TOOL_FOR_KIND = {
    ManifestKind.ENVIRONMENT_YML: "conda",
    ManifestKind.REQUIREMENTS_TXT: "pip",
    ManifestKind.PIPFILE: "pipenv",
    ManifestKind.SETUP_PY: "pip-project",
}


@dataclass(frozen=True)
class EnvironmentPlan:
    interpreter_version: str  # requested major.minor
    interpreter_defaulted: bool  # notebook declared no language version
    manifests: tuple[ManifestRef, ...]
    install_steps: tuple[tuple[str, str], ...]  # (tool kind, repo-relative manifest path)
    env_id: str
    source_root: Optional[Path]  # where manifest paths resolve from


@dataclass(frozen=True)
class EnvironmentHandle:
    env_id: str
    interpreter_path: Path
    actual_interpreter_version: str
    satisfied: bool
    provision_log: str


def _major_minor(version: str) -> str:
    parts = version.split(".")
    if len(parts) == 1:
        return parts[0]
    return f"{parts[0]}.{parts[1]}"


def host_interpreter_version() -> str:
    return f"{sys.version_info[0]}.{sys.version_info[1]}"


def plan_environment(
    manifests: list[ManifestRef] | tuple[ManifestRef, ...],
    nb: Notebook,
    snapshot: Optional[RepositorySnapshot] = None,
) -> EnvironmentPlan:
    """Total: always yields a plan, even with no manifests or language version.

    The requested interpreter is the notebook's language version truncated to
    major.minor; absent that, the analysis host's version (flagged).
    """
    if nb.language_version:
        requested = _major_minor(nb.language_version)
        defaulted = False
    else:
        requested = host_interpreter_version()
        defaulted = True
    ordered = tuple(manifests)
    steps = tuple((_TOOL_FOR_KIND[m.kind], m.path) for m in ordered)

    digest = hashlib.sha256()
    digest.update((snapshot.ref if snapshot is not None else "").encode("utf-8"))
    digest.update(b"\0")
    digest.update(requested.encode("ascii"))
    for manifest in ordered:
        digest.update(b"\0")
        digest.update(manifest.path.encode("utf-8"))
        digest.update(b"\0")
        if snapshot is not None:
            content = (snapshot.root / manifest.path).read_bytes()
            digest.update(hashlib.sha256(content).digest())
    return EnvironmentPlan(
        interpreter_version=requested,
        interpreter_defaulted=defaulted,
        manifests=ordered,
        install_steps=steps,
        env_id=digest.hexdigest(),
        source_root=snapshot.root if snapshot is not None else None,
    )


class Provisioner(Protocol):
    def provision(self, plan: EnvironmentPlan) -> EnvironmentHandle: ...


@dataclass
class RecordingProvisioner:
    """Test double: records steps, fabricates handles, no side effects."""

    interpreter_path: Path = field(default_factory=lambda: Path(sys.executable))
    interpreter_version: str = field(default_factory=lambda: ".".join(str(v) for v in sys.version_info[:3]))
    fail_on_tool: Optional[str] = None
    unsatisfied: bool = False
    provisioned: list[str] = field(default_factory=list)
    executed_steps: list[tuple[str, tuple[str, str]]] = field(default_factory=list)

    def provision(self, plan: EnvironmentPlan) -> EnvironmentHandle:
        self.provisioned.append(plan.env_id)
        log_lines = [f"recording provisioner: env {plan.env_id[:12]}"]
        for step in plan.install_steps:
            self.executed_steps.append((plan.env_id, step))
            if self.fail_on_tool is not None and step[0] == self.fail_on_tool:
                raise ProvisionFailed(step, f"simulated failure for {step}")
            log_lines.append(f"ran {step}")
        return EnvironmentHandle(
            env_id=plan.env_id,
            interpreter_path=self.interpreter_path,
            actual_interpreter_version=self.interpreter_version,
            satisfied=not self.unsatisfied,
            provision_log="\n".join(log_lines),
        )


def _probe_version(interpreter: Path) -> str:
    out = subprocess.run(
        [str(interpreter), "-c", "import sys; print('.'.join(map(str, sys.version_info[:3])))"],
        capture_output=True,
        text=True,
        timeout=30,
    )
    if out.returncode != 0:
        raise InterpreterUnavailable(f"{interpreter}: version probe failed: {out.stderr.strip()}")
    return out.stdout.strip()


def find_interpreter(requested: str) -> tuple[Path, str, bool]:
    """Locate a major.minor match, or the nearest same-major fallback.

    Returns (path, actual version, fell_back).
    """
    major_s, _, minor_s = requested.partition(".")
    try:
        major = int(major_s)
        minor = int(minor_s) if minor_s else None
    except ValueError:
        raise InterpreterUnavailable(f"unparseable interpreter version {requested!r}") from None

    candidates: dict[str, Path] = {}
    host_mm = host_interpreter_version()
    candidates[host_mm] = Path(sys.executable)
    for m in range(0, 20):
        found = shutil.which(f"python{major}.{m}")
        if found:
            candidates.setdefault(f"{major}.{m}", Path(found))
    bare = shutil.which(f"python{major}")
    if bare:
        probed = _probe_version(Path(bare))
        candidates.setdefault(_major_minor(probed), Path(bare))

    same_major = {mm: p for mm, p in candidates.items() if mm.split(".")[0] == str(major)}
    if not same_major:
        raise InterpreterUnavailable(f"no interpreter with major version {major} available")
    if minor is None:
        mm = sorted(same_major, key=lambda v: int(v.split(".")[1]))[-1]
        path = same_major[mm]
        return path, _probe_version(path), False
    exact = f"{major}.{minor}"
    if exact in same_major:
        path = same_major[exact]
        return path, _probe_version(path), False
    # nearest same-major minor; prefer the newer on ties
    nearest = min(same_major, key=lambda v: (abs(int(v.split(".")[1]) - minor), -int(v.split(".")[1])))
    path = same_major[nearest]
    return path, _probe_version(path), True


class SubprocessProvisioner:
    """Create a venv per env id and run install steps with real tooling."""

    def __init__(self, workdir: Path, step_timeout_s: int = 900) -> None:
        self.workdir = Path(workdir)
        self.step_timeout_s = step_timeout_s

    def _env_dir(self, env_id: str) -> Path:
        return self.workdir / "envs" / env_id

    def _step_argv(self, tool: str, manifest: Path, env_python: Path) -> list[str]:
        if tool == "pip":
            return [str(env_python), "-m", "pip", "install", "-r", str(manifest)]
        if tool == "pip-project":
            return [str(env_python), "-m", "pip", "install", str(manifest.parent)]
        if tool == "conda":
            conda = shutil.which("conda")
            if conda is None:
                return ["false"]  # recorded as a failing step: conda not installed
            return [conda, "env", "update", "--file", str(manifest), "--prefix", str(manifest.parent / ".conda-env")]
        if tool == "pipenv":
            pipenv = shutil.which("pipenv")
            if pipenv is None:
                return ["false"]
            return [pipenv, "install", "--system"]
        return ["false"]

    def provision(self, plan: EnvironmentPlan) -> EnvironmentHandle:
        env_dir = self._env_dir(plan.env_id)
        marker = env_dir / "handle.json"
        if marker.exists():
            doc = json.loads(marker.read_text(encoding="utf-8"))
            return EnvironmentHandle(
                env_id=doc["env_id"],
                interpreter_path=Path(doc["interpreter_path"]),
                actual_interpreter_version=doc["actual_interpreter_version"],
                satisfied=doc["satisfied"],
                provision_log=doc["provision_log"],
            )

        base_python, actual_version, fell_back = find_interpreter(plan.interpreter_version)
        log: list[str] = [f"base interpreter: {base_python} ({actual_version})"]
        if fell_back:
            log.append(
                f"requested interpreter {plan.interpreter_version} unavailable; "
                f"fell back to nearest same-major {actual_version}"
            )

        env_dir.mkdir(parents=True, exist_ok=True)
        venv_dir = env_dir / "venv"
        if not venv_dir.exists():
            created = subprocess.run(
                [str(base_python), "-m", "venv", str(venv_dir)],
                capture_output=True,
                text=True,
                timeout=self.step_timeout_s,
            )
            log.append(created.stdout + created.stderr)
            if created.returncode != 0:
                raise ProvisionFailed(("venv", str(venv_dir)), "\n".join(log))
        env_python = venv_dir / "bin" / "python"

        for tool, rel_path in plan.install_steps:
            manifest = (plan.source_root or Path(".")) / rel_path
            argv = self._step_argv(tool, manifest, env_python)
            log.append(f"$ {' '.join(argv)}")
            try:
                ran = subprocess.run(argv, capture_output=True, text=True, timeout=self.step_timeout_s)
            except subprocess.TimeoutExpired as exc:
                log.append(f"step timed out after {self.step_timeout_s}s")
                raise ProvisionFailed((tool, rel_path), "\n".join(log)) from exc
            log.append(ran.stdout + ran.stderr)
            if ran.returncode != 0:
                raise ProvisionFailed((tool, rel_path), "\n".join(log))

        handle = EnvironmentHandle(
            env_id=plan.env_id,
            interpreter_path=env_python,
            actual_interpreter_version=actual_version,
            satisfied=True,
            provision_log="\n".join(log),
        )
        marker.write_text(
            json.dumps(
                {
                    "env_id": handle.env_id,
                    "interpreter_path": str(handle.interpreter_path),
                    "actual_interpreter_version": handle.actual_interpreter_version,
                    "satisfied": handle.satisfied,
                    "provision_log": handle.provision_log,
                }
            ),
            encoding="utf-8",
        )
        return handle


class EnvironmentManager:
    """Caches handles by env id and serializes provisioning per env id."""

    def __init__(self, provisioner: Provisioner) -> None:
        self.provisioner = provisioner
        self._cache: dict[str, EnvironmentHandle] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _lock_for(self, env_id: str) -> threading.Lock:
        with self._registry_lock:
            if env_id not in self._locks:
                self._locks[env_id] = threading.Lock()
            return self._locks[env_id]

    def provision(self, plan: EnvironmentPlan) -> EnvironmentHandle:
        """Idempotent: a cached env id is returned without re-running steps."""
        with self._lock_for(plan.env_id):
            cached = self._cache.get(plan.env_id)
            if cached is not None:
                return cached
            handle = self.provisioner.provision(plan)
            self._cache[plan.env_id] = handle
            return handle
