"""Standalone miniature kernel process speaking the v5 wire protocol over ZMQ.

Run as ``python -m repro_lens.kernel.mock_kernel -f <connection-file>``. It
binds the five standard sockets, answers kernel_info, and executes code with
``PythonExecBehavior`` (or canned responses with ``--script``). It exists so
the client's socket path can be tested end to end without a full kernel
installation, and doubles as the execution backend for real reproduction
runs in bare environments.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from pathlib import Path
from typing import Optional

import zmq

from ..notebook import Output
from . import transport as ch
from .connection import read_connection_file
from .minikernel import CellScript, KernelBrain, PythonExecBehavior, ScriptedBehavior


def _load_script(path: Path) -> ScriptedBehavior:
    """Script file: {"cells": {code: {...}}, "default": {...}} with Output JSON."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def to_script(entry: dict) -> CellScript:
        outputs = []
        for out in entry.get("outputs", []):
            kind = out.get("kind")
            if kind == "stream":
                outputs.append(Output.stream(out["name"], out["text"]))
            elif kind == "execute_result":
                outputs.append(Output.execute_result(out["data"]))
            elif kind == "display_data":
                outputs.append(Output.display_data(out["data"]))
            elif kind == "error":
                outputs.append(Output.error(out["ename"], out.get("evalue", "")))
        error = tuple(entry["error"]) if entry.get("error") else None
        return CellScript(
            outputs=tuple(outputs),
            reply_status=entry.get("reply_status", "ok"),
            hang=bool(entry.get("hang", False)),
            delay_ms=int(entry.get("delay_ms", 0)),
            error=error,  # type: ignore[arg-type]
        )

    cells = {code: to_script(entry) for code, entry in doc.get("cells", {}).items()}
    default = to_script(doc["default"]) if "default" in doc else None
    return ScriptedBehavior(cells, default)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="mock-kernel")
    parser.add_argument("-f", "--connection-file", required=True)
    parser.add_argument("--script", default=None, help="JSON script of canned cell responses")
    args = parser.parse_args(argv)

    info = read_connection_file(Path(args.connection_file))
    behavior = _load_script(Path(args.script)) if args.script else PythonExecBehavior()
    brain = KernelBrain(key=info.key, behavior=behavior)

    context = zmq.Context()
    url = lambda port: f"tcp://{info.ip}:{port}"  # noqa: E731
    shell = context.socket(zmq.ROUTER)
    shell.bind(url(info.shell_port))
    iopub = context.socket(zmq.PUB)
    iopub.bind(url(info.iopub_port))
    stdin_sock = context.socket(zmq.ROUTER)
    stdin_sock.bind(url(info.stdin_port))
    control = context.socket(zmq.ROUTER)
    control.bind(url(info.control_port))
    hb = context.socket(zmq.REP)
    hb.bind(url(info.hb_port))

    stop = threading.Event()
    send_lock = threading.Lock()

    def emit(channel: str, frames: list[bytes]) -> None:
        sock = {ch.IOPUB: iopub, ch.SHELL: shell, ch.STDIN: stdin_sock, ch.CONTROL: control}[channel]
        with send_lock:
            sock.send_multipart(frames)

    def read_stdin(timeout_ms: int) -> Optional[list[bytes]]:
        if stdin_sock.poll(timeout_ms):
            return stdin_sock.recv_multipart()
        return None

    def heartbeat_loop() -> None:
        while not stop.is_set():
            if hb.poll(100):
                try:
                    hb.send(hb.recv())
                except zmq.ZMQError:
                    return

    def control_loop() -> None:
        while not stop.is_set():
            if control.poll(100):
                frames = control.recv_multipart()
                if not brain.handle(ch.CONTROL, frames, emit, read_stdin):
                    stop.set()

    signal.signal(signal.SIGINT, lambda *_: brain.cancel.set())

    threading.Thread(target=heartbeat_loop, daemon=True).start()
    threading.Thread(target=control_loop, daemon=True).start()

    while not stop.is_set():
        if shell.poll(100):
            frames = shell.recv_multipart()
            if not brain.handle(ch.SHELL, frames, emit, read_stdin):
                stop.set()

    for sock in (shell, iopub, stdin_sock, control, hb):
        sock.close(0)
    context.term()
    return 0


if __name__ == "__main__":
    sys.exit(main())
