"""Kernel sessions: startup handshake, cell execution, shutdown.

A session owns one kernel and serializes execute calls. A background
receiver drains the transport and parses frames (dropping anything whose
signature does not verify); execute consumes the parsed inbox and keeps only
messages attributable to its own request via the parent msg id.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from ..notebook import KernelSpecInfo, Output, OutputKind
from . import transport as ch
from .connection import ConnectionInfo, generate_connection_info, write_connection_file
from .transport import KernelLauncher, KernelTransport
from .wire import WireMessage, build_message, parse_frames, to_frames


class KernelLaunchFailed(Exception):
    pass


class HandshakeTimeout(Exception):
    pass


class SessionDead(Exception):
    pass


class CellStatus(Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"
    ABORTED = "aborted"


@dataclass(frozen=True)
class CellExecutionResult:
    status: CellStatus
    outputs: tuple[Output, ...]
    execution_count: Optional[int]
    started_at: datetime
    ended_at: datetime

    @property
    def duration_ms(self) -> int:
        return (self.ended_at - self.started_at) // timedelta(milliseconds=1)


@dataclass
class SessionConfig:
    startup_timeout_ms: int = 30_000
    interrupt_grace_ms: int = 2_000
    shutdown_grace_ms: int = 2_000
    poll_interval_ms: int = 20


class KernelSession:
    def __init__(
        self,
        transport: KernelTransport,
        connection: ConnectionInfo,
        config: SessionConfig | None = None,
    ) -> None:
        self.transport = transport
        self.connection = connection
        self.config = config or SessionConfig()
        self.session_id = uuid.uuid4().hex
        self.kernel_info: dict[str, Any] = {}
        self.stdin_events: list[str] = []
        self.dropped_messages = 0  # bad signature / malformed frames
        self._live = False
        self._inbox: queue.Queue[tuple[str, WireMessage]] = queue.Queue()
        self._stop = threading.Event()
        self._receiver = threading.Thread(target=self._receive_loop, name="kernel-receiver", daemon=True)

    # --- plumbing ----------------------------------------------------------

    def _receive_loop(self) -> None:
        while not self._stop.is_set():
            try:
                ready = self.transport.poll(self.config.poll_interval_ms)
            except Exception:
                break
            for channel, frames in ready:
                try:
                    msg = parse_frames(frames, self.connection.key)
                except Exception:
                    self.dropped_messages += 1
                    continue
                self._inbox.put((channel, msg))

    def _start(self) -> None:
        self._receiver.start()

    def _send(self, channel: str, msg_type: str, content: dict[str, Any], parent: dict[str, Any] | None = None) -> WireMessage:
        msg = build_message(msg_type, content, self.session_id, parent=parent)
        self.transport.send(channel, to_frames(msg, self.connection.key))
        return msg

    def _next_message(self, timeout_ms: int) -> Optional[tuple[str, WireMessage]]:
        try:
            return self._inbox.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            return None

    def is_live(self) -> bool:
        return self._live and self.transport.is_alive()

    def _mark_dead(self) -> None:
        self._live = False
        self._stop.set()

    # --- lifecycle ---------------------------------------------------------

    def _handshake(self) -> None:
        # kernel_info_request is retried until answered; readiness also needs
        # one iopub sighting so a slow-joining subscription cannot lose the
        # first execute's output
        deadline = time.monotonic() + self.config.startup_timeout_ms / 1000.0
        last_request = -1.0
        saw_iopub = False
        info: Optional[dict[str, Any]] = None
        while time.monotonic() < deadline:
            # keep requesting until both conditions hold: a reply can arrive
            # while the iopub subscription is still joining, and only fresh
            # requests generate fresh iopub traffic
            if time.monotonic() - last_request >= 0.2:
                try:
                    self._send(ch.SHELL, "kernel_info_request", {})
                except Exception as exc:
                    raise KernelLaunchFailed(f"transport failed during handshake: {exc}") from exc
                last_request = time.monotonic()
            got = self._next_message(50)
            if got is not None:
                channel, msg = got
                if channel == ch.IOPUB:
                    saw_iopub = True
                elif channel == ch.SHELL and msg.msg_type == "kernel_info_reply":
                    version = str(msg.content.get("protocol_version", ""))
                    if not version.startswith("5"):
                        self.transport.kill()
                        self._mark_dead()
                        raise KernelLaunchFailed(f"kernel speaks protocol {version or 'unknown'}, need 5.x")
                    info = dict(msg.content)
            if info is not None and saw_iopub:
                self.kernel_info = info
                self._live = True
                return
        self.transport.kill()
        self._mark_dead()
        raise HandshakeTimeout(f"no kernel_info reply within {self.config.startup_timeout_ms} ms")

    # --- execution ---------------------------------------------------------

    def execute(self, code: str, timeout_ms: int) -> CellExecutionResult:
        if not self.is_live():
            raise SessionDead("session is not live")
        started_at = datetime.now(timezone.utc)
        try:
            request = self._send(
                ch.SHELL,
                "execute_request",
                {
                    "code": code,
                    "silent": False,
                    "store_history": True,
                    "user_expressions": {},
                    "allow_stdin": True,
                    "stop_on_error": False,
                },
            )
        except Exception as exc:
            self._mark_dead()
            raise SessionDead(f"transport failed: {exc}") from exc
        request_id = request.header["msg_id"]

        outputs: list[Output] = []
        execution_count: Optional[int] = None
        reply: Optional[WireMessage] = None
        idle = False
        deadline = time.monotonic() + timeout_ms / 1000.0

        def consume(channel: str, msg: WireMessage) -> None:
            nonlocal execution_count, reply, idle
            if msg.parent_msg_id != request_id:
                return  # not ours: never attribute foreign output to this cell
            if channel == ch.IOPUB:
                out = _iopub_to_output(msg)
                if out is not None:
                    outputs.append(out)
                    if out.kind is OutputKind.EXECUTE_RESULT and out.execution_count is not None:
                        execution_count = out.execution_count
                elif msg.msg_type == "status" and msg.content.get("execution_state") == "idle":
                    idle = True
            elif channel == ch.SHELL and msg.msg_type == "execute_reply":
                reply = msg
                if isinstance(msg.content.get("execution_count"), int):
                    execution_count = msg.content["execution_count"]
            elif channel == ch.STDIN and msg.msg_type == "input_request":
                # answer interactive prompts with an empty string, or the
                # notebook would hang forever waiting for a user
                self.stdin_events.append(str(msg.content.get("prompt", "")))
                self._send(ch.STDIN, "input_reply", {"value": ""}, parent=msg.header)

        while not (reply is not None and idle):
            remaining_ms = int((deadline - time.monotonic()) * 1000)
            if remaining_ms <= 0:
                break
            got = self._next_message(min(remaining_ms, self.config.poll_interval_ms))
            if got is not None:
                consume(*got)
            elif not self.transport.is_alive():
                self._mark_dead()
                raise SessionDead("kernel transport died mid-execution")

        if not (reply is not None and idle):
            # timed out: interrupt, give the kernel a grace period to settle,
            # then kill; the result is Timeout regardless
            try:
                self.transport.interrupt()
            except Exception:
                pass
            grace_deadline = time.monotonic() + self.config.interrupt_grace_ms / 1000.0
            while time.monotonic() < grace_deadline and not (reply is not None and idle):
                got = self._next_message(self.config.poll_interval_ms)
                if got is not None:
                    consume(*got)
            self.transport.kill()
            self._mark_dead()
            return CellExecutionResult(
                status=CellStatus.TIMEOUT,
                outputs=tuple(outputs),
                execution_count=execution_count,
                started_at=started_at,
                ended_at=datetime.now(timezone.utc),
            )

        status_str = str(reply.content.get("status", "error"))
        status = {"ok": CellStatus.OK, "error": CellStatus.ERROR, "aborted": CellStatus.ABORTED}.get(
            status_str, CellStatus.ERROR
        )
        if status is CellStatus.ERROR:
            outputs = _with_final_error(outputs, reply)
        return CellExecutionResult(
            status=status,
            outputs=tuple(outputs),
            execution_count=execution_count,
            started_at=started_at,
            ended_at=datetime.now(timezone.utc),
        )

    def shutdown(self) -> None:
        """Graceful shutdown_request, then forced kill; idempotent."""
        self._live = False
        if self.transport.is_alive():
            try:
                self._send(ch.CONTROL, "shutdown_request", {"restart": False})
            except Exception:
                pass
            deadline = time.monotonic() + self.config.shutdown_grace_ms / 1000.0
            while time.monotonic() < deadline and self.transport.is_alive():
                time.sleep(0.01)
        try:
            self.transport.kill()
        except Exception:
            pass
        self._stop.set()
        try:
            self.transport.close()
        except Exception:
            pass


def _iopub_to_output(msg: WireMessage) -> Optional[Output]:
    content = msg.content
    if msg.msg_type == "stream":
        return Output.stream(str(content.get("name", "stdout")), str(content.get("text", "")))
    if msg.msg_type == "execute_result":
        count = content.get("execution_count")
        return Output.execute_result(dict(content.get("data", {})), count if isinstance(count, int) else None)
    if msg.msg_type == "display_data":
        return Output.display_data(dict(content.get("data", {})))
    if msg.msg_type == "error":
        tb = content.get("traceback", [])
        return Output.error(
            str(content.get("ename", "Error")),
            str(content.get("evalue", "")),
            tuple(str(t) for t in tb) if isinstance(tb, list) else (),
        )
    return None


def _with_final_error(outputs: list[Output], reply: WireMessage) -> list[Output]:
    """Enforce: an Error result carries exactly one Error output, last."""
    errors = [o for o in outputs if o.kind is OutputKind.ERROR]
    rest = [o for o in outputs if o.kind is not OutputKind.ERROR]
    if errors:
        return rest + [errors[-1]]
    content = reply.content
    synthesized = Output.error(
        str(content.get("ename", "Error")) or "Error",
        str(content.get("evalue", "")),
        tuple(str(t) for t in content.get("traceback", []) or ()),
    )
    return rest + [synthesized]


def start_kernel(
    env,
    spec: KernelSpecInfo | None,
    launcher: KernelLauncher,
    cwd: Path,
    config: SessionConfig | None = None,
) -> KernelSession:
    """Launch a kernel in a provisioned environment and perform the handshake.

    Raises KernelLaunchFailed (spawn failure, unsatisfied environment, or
    protocol mismatch) or HandshakeTimeout.
    """
    if not env.satisfied:
        raise KernelLaunchFailed(f"environment {env.env_id} is not satisfied")
    cwd = Path(cwd)
    cwd.mkdir(parents=True, exist_ok=True)
    connection = generate_connection_info(bind_real_ports=getattr(launcher, "uses_network", True))
    connection_file = write_connection_file(connection, cwd)
    transport = launcher.launch(connection, env, spec, cwd, connection_file)
    session = KernelSession(transport, connection, config)
    session._start()
    try:
        session._handshake()
    except Exception:
        transport.kill()
        raise
    return session


def execute(session: KernelSession, code: str, timeout_ms: int) -> CellExecutionResult:
    return session.execute(code, timeout_ms)


def shutdown(session: KernelSession) -> None:
    session.shutdown()
