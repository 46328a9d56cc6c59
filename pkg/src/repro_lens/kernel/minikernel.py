"""A miniature kernel: protocol dispatch plus pluggable execution behavior.

The same brain powers the in-process loopback transport and the standalone
mock-kernel process, so the client is exercised against one protocol
implementation regardless of how the kernel is hosted. Execution behavior is
pluggable: ``PythonExecBehavior`` really runs code in an isolated namespace,
``ScriptedBehavior`` replays canned responses (including pathological ones
such as hanging forever or emitting misattributed messages).
"""

from __future__ import annotations

import ast
import io
import os
import sys
import threading
import traceback as traceback_mod
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

from ..notebook import Output, OutputKind
from . import transport as ch
from .wire import PROTOCOL_VERSION, WireMessage, build_message, parse_frames, to_frames

Emit = Callable[[str, list[bytes]], None]
ReadStdin = Callable[[int], Optional[list[bytes]]]


@dataclass
class ExecOutcome:
    status: str = "ok"  # ok | error
    ename: str = ""
    evalue: str = ""
    traceback: tuple[str, ...] = ()


class ExecContext:
    """What a behavior may do while executing one cell."""

    def __init__(
        self,
        code: str,
        execution_count: int,
        cancel: threading.Event,
        emit_output: Callable[[Output], None],
        emit_foreign: Callable[[Output], None],
        request_input: Callable[[str], str],
    ) -> None:
        self.code = code
        self.execution_count = execution_count
        self.cancel = cancel
        self.emit_output = emit_output
        self.emit_foreign = emit_foreign
        self.request_input = request_input


class Behavior(Protocol):
    def run(self, ctx: ExecContext) -> ExecOutcome: ...


@dataclass(frozen=True)
class CellScript:
    """Canned kernel behavior for one exact code string."""

    outputs: tuple[Output, ...] = ()
    reply_status: str = "ok"
    hang: bool = False
    delay_ms: int = 0
    # outputs emitted under a bogus parent id before the real ones
    leaks: tuple[Output, ...] = ()
    input_prompt: Optional[str] = None
    error: Optional[tuple[str, str]] = None  # (ename, evalue): emits Error output, replies error


class ScriptedBehavior:
    def __init__(self, script: dict[str, CellScript] | None = None, default: CellScript | None = None) -> None:
        self.script = dict(script or {})
        self.default = default if default is not None else CellScript()

    def run(self, ctx: ExecContext) -> ExecOutcome:
        entry = self.script.get(ctx.code, self.default)
        for leak in entry.leaks:
            ctx.emit_foreign(leak)
        if entry.delay_ms:
            ctx.cancel.wait(entry.delay_ms / 1000.0)
        if entry.hang:
            ctx.cancel.wait()
            return ExecOutcome(status="error", ename="KeyboardInterrupt", evalue="interrupted")
        if entry.input_prompt is not None:
            answer = ctx.request_input(entry.input_prompt)
            ctx.emit_output(Output.stream("stdout", f"input:{answer!r}\n"))
        for out in entry.outputs:
            ctx.emit_output(out)
        if entry.error is not None:
            ename, evalue = entry.error
            ctx.emit_output(Output.error(ename, evalue, (f"{ename}: {evalue}",)))
            return ExecOutcome(status="error", ename=ename, evalue=evalue, traceback=(f"{ename}: {evalue}",))
        if entry.reply_status == "error":
            return ExecOutcome(status="error", ename="Error", evalue="scripted error")
        return ExecOutcome(status="ok")


class _EmittingWriter(io.TextIOBase):
    def __init__(self, name: str, emit: Callable[[Output], None]) -> None:
        self._name = name
        self._emit = emit

    def writable(self) -> bool:  # pragma: no cover - io plumbing
        return True

    def write(self, text: str) -> int:
        if text:
            self._emit(Output.stream(self._name, text))
        return len(text)


class _RequestingReader(io.TextIOBase):
    def __init__(self, request_input: Callable[[str], str]) -> None:
        self._request_input = request_input

    def readable(self) -> bool:  # pragma: no cover - io plumbing
        return True

    def readline(self, size: int = -1) -> str:
        return self._request_input("") + "\n"

    def read(self, size: int = -1) -> str:
        return self.readline()


class PythonExecBehavior:
    """Execute cell code for real, in an isolated module namespace.

    stdout/stderr writes become stream outputs, the value of a trailing
    expression becomes an execute_result, and exceptions become error
    outputs with real enames (so ModuleNotFoundError, SyntaxError, and
    friends arise naturally from the code under test).
    """

    # sys.stdout swaps are process-global: one cell executes at a time
    _exec_lock = threading.Lock()

    def __init__(self, workdir: Optional[Path] = None) -> None:
        self.namespace: dict[str, Any] = {"__name__": "__main__"}
        self.workdir = Path(workdir) if workdir is not None else None

    def run(self, ctx: ExecContext) -> ExecOutcome:
        try:
            tree = ast.parse(ctx.code)
        except SyntaxError as exc:
            tb = traceback_mod.format_exception_only(type(exc), exc)
            ctx.emit_output(Output.error("SyntaxError", str(exc.msg or exc), tuple(t.rstrip("\n") for t in tb)))
            return ExecOutcome(status="error", ename="SyntaxError", evalue=str(exc.msg or exc))

        trailing_expr: Optional[ast.Expression] = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            trailing_expr = ast.Expression(tree.body.pop().value)  # type: ignore[attr-defined]

        with PythonExecBehavior._exec_lock:
            old_streams = sys.stdout, sys.stderr, sys.stdin
            old_cwd = os.getcwd()
            sys.stdout = _EmittingWriter("stdout", ctx.emit_output)  # type: ignore[assignment]
            sys.stderr = _EmittingWriter("stderr", ctx.emit_output)  # type: ignore[assignment]
            sys.stdin = _RequestingReader(ctx.request_input)  # type: ignore[assignment]
            try:
                if self.workdir is not None:
                    os.chdir(self.workdir)
                code_obj = compile(tree, "<cell>", "exec")
                exec(code_obj, self.namespace)
                if trailing_expr is not None:
                    value = eval(compile(trailing_expr, "<cell>", "eval"), self.namespace)
                    if value is not None:
                        ctx.emit_output(
                            Output.execute_result({"text/plain": repr(value)}, execution_count=ctx.execution_count)
                        )
                return ExecOutcome(status="ok")
            except BaseException as exc:  # noqa: BLE001 - any cell failure becomes an error output
                ename = type(exc).__name__
                evalue = str(exc)
                tb = tuple(line.rstrip("\n") for line in traceback_mod.format_exception(type(exc), exc, exc.__traceback__))
                ctx.emit_output(Output.error(ename, evalue, tb))
                return ExecOutcome(status="error", ename=ename, evalue=evalue, traceback=tb)
            finally:
                sys.stdout, sys.stderr, sys.stdin = old_streams
                os.chdir(old_cwd)


def _output_to_iopub(out: Output) -> tuple[str, dict[str, Any]]:
    if out.kind is OutputKind.STREAM:
        return "stream", {"name": out.stream_name, "text": out.text}
    if out.kind is OutputKind.EXECUTE_RESULT:
        return "execute_result", {
            "data": dict(out.data or {}),
            "metadata": {},
            "execution_count": out.execution_count,
        }
    if out.kind is OutputKind.DISPLAY_DATA:
        return "display_data", {"data": dict(out.data or {}), "metadata": {}}
    return "error", {"ename": out.ename, "evalue": out.evalue, "traceback": list(out.traceback)}


@dataclass
class KernelBrain:
    """Protocol dispatch for a miniature v5 kernel."""

    key: bytes
    behavior: Behavior
    protocol_version: str = PROTOCOL_VERSION
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    execution_count: int = 0
    cancel: threading.Event = field(default_factory=threading.Event)

    def _send(self, emit: Emit, channel: str, msg_type: str, content: dict[str, Any], parent: dict[str, Any], identities: tuple[bytes, ...] = ()) -> None:
        if channel == ch.IOPUB:
            identities = (msg_type.encode("ascii"),)
        msg = build_message(msg_type, content, self.session_id, parent=parent, identities=identities, username="kernel")
        emit(channel, to_frames(msg, self.key))

    def _status(self, emit: Emit, state: str, parent: dict[str, Any]) -> None:
        self._send(emit, ch.IOPUB, "status", {"execution_state": state}, parent)

    def handle(self, channel: str, frames: list[bytes], emit: Emit, read_stdin: ReadStdin) -> bool:
        """Process one incoming message; returns False once shut down."""
        try:
            msg = parse_frames(frames, self.key)
        except Exception:
            return True  # tampered or malformed: drop, stay alive
        if msg.msg_type == "kernel_info_request":
            self._status(emit, "busy", msg.header)
            self._send(
                emit,
                channel,
                "kernel_info_reply",
                {
                    "status": "ok",
                    "protocol_version": self.protocol_version,
                    "implementation": "repro-lens-mini",
                    "implementation_version": "0.1",
                    "language_info": {
                        "name": "python",
                        "version": ".".join(str(v) for v in sys.version_info[:3]),
                    },
                    "banner": "repro-lens miniature kernel",
                },
                msg.header,
                identities=msg.identities,
            )
            self._status(emit, "idle", msg.header)
            return True
        if msg.msg_type == "execute_request":
            return self._execute(channel, msg, emit, read_stdin)
        if msg.msg_type == "interrupt_request":
            self.cancel.set()
            self._send(emit, channel, "interrupt_reply", {"status": "ok"}, msg.header, identities=msg.identities)
            return True
        if msg.msg_type == "shutdown_request":
            self._send(
                emit,
                channel,
                "shutdown_reply",
                {"status": "ok", "restart": bool(msg.content.get("restart", False))},
                msg.header,
                identities=msg.identities,
            )
            return False
        return True

    def _execute(self, channel: str, msg: WireMessage, emit: Emit, read_stdin: ReadStdin) -> bool:
        parent = msg.header
        code = str(msg.content.get("code", ""))
        self._status(emit, "busy", parent)
        self.execution_count += 1
        count = self.execution_count
        self._send(emit, ch.IOPUB, "execute_input", {"code": code, "execution_count": count}, parent)

        def emit_output(out: Output) -> None:
            msg_type, content = _output_to_iopub(out)
            if msg_type == "execute_result":
                content["execution_count"] = count
            self._send(emit, ch.IOPUB, msg_type, content, parent)

        def emit_foreign(out: Output) -> None:
            msg_type, content = _output_to_iopub(out)
            foreign_parent = dict(parent)
            foreign_parent["msg_id"] = uuid.uuid4().hex
            self._send(emit, ch.IOPUB, msg_type, content, foreign_parent)

        def request_input(prompt: str) -> str:
            # routed back over the requester's identities (ROUTER sockets)
            self._send(emit, ch.STDIN, "input_request", {"prompt": prompt, "password": False}, parent, identities=msg.identities)
            while not self.cancel.is_set():
                frames = read_stdin(100)
                if frames is None:
                    continue
                try:
                    reply = parse_frames(frames, self.key)
                except Exception:
                    continue
                if reply.msg_type == "input_reply":
                    return str(reply.content.get("value", ""))
            return ""

        self.cancel.clear()
        ctx = ExecContext(code, count, self.cancel, emit_output, emit_foreign, request_input)
        outcome = self.behavior.run(ctx)
        reply: dict[str, Any] = {"status": outcome.status, "execution_count": count}
        if outcome.status == "error":
            reply.update({"ename": outcome.ename, "evalue": outcome.evalue, "traceback": list(outcome.traceback)})
        self._send(emit, channel, "execute_reply", reply, parent, identities=msg.identities)
        self._status(emit, "idle", parent)
        return True
