"""ZMQ socket transport for kernels running as real processes.

Socket objects are confined to one IO thread (ZMQ sockets are not
thread-safe); the public transport methods talk to that thread via queues,
mirroring the loopback transport's shape.
"""

from __future__ import annotations

import queue
import subprocess
import threading
import uuid
from pathlib import Path
from typing import Optional

import zmq

from . import transport as ch
from .connection import ConnectionInfo
from .wire import build_message, to_frames


class ZmqClientTransport:
    def __init__(self, connection: ConnectionInfo, process: Optional[subprocess.Popen] = None) -> None:
        self.connection = connection
        self.process = process
        self._out: queue.Queue = queue.Queue()
        self._in: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._killed = False
        self._hb_lock = threading.Lock()
        self._io = threading.Thread(target=self._io_loop, name="zmq-io", daemon=True)
        self._io.start()

    def _io_loop(self) -> None:
        ctx = zmq.Context()
        identity = uuid.uuid4().hex.encode("ascii")
        url = lambda port: f"tcp://{self.connection.ip}:{port}"  # noqa: E731
        sockets: dict[str, zmq.Socket] = {}
        try:
            for name, port, kind in (
                (ch.SHELL, self.connection.shell_port, zmq.DEALER),
                (ch.IOPUB, self.connection.iopub_port, zmq.SUB),
                (ch.STDIN, self.connection.stdin_port, zmq.DEALER),
                (ch.CONTROL, self.connection.control_port, zmq.DEALER),
            ):
                sock = ctx.socket(kind)
                if kind == zmq.DEALER:
                    sock.setsockopt(zmq.IDENTITY, identity)
                sock.linger = 0
                sock.connect(url(port))
                if kind == zmq.SUB:
                    sock.setsockopt(zmq.SUBSCRIBE, b"")
                sockets[name] = sock
            hb = ctx.socket(zmq.REQ)
            hb.linger = 0
            hb.connect(url(self.connection.hb_port))

            poller = zmq.Poller()
            for sock in sockets.values():
                poller.register(sock, zmq.POLLIN)

            while not self._stop.is_set():
                while True:
                    try:
                        item = self._out.get_nowait()
                    except queue.Empty:
                        break
                    kind, payload = item
                    if kind == "send":
                        channel, frames = payload
                        sockets[channel].send_multipart(frames)
                    elif kind == "hb":
                        done, result, timeout_ms = payload
                        ok = False
                        try:
                            hb.send(b"ping")
                            if hb.poll(timeout_ms):
                                hb.recv()
                                ok = True
                        except zmq.ZMQError:
                            pass
                        result["ok"] = ok
                        done.set()
                for sock, _flags in poller.poll(20):
                    for name, candidate in sockets.items():
                        if candidate is sock:
                            self._in.put((name, sock.recv_multipart()))
                            break
        finally:
            for sock in sockets.values():
                sock.close(0)
            try:
                hb.close(0)
            except Exception:
                pass
            ctx.term()

    # --- transport interface -------------------------------------------------

    def send(self, channel: str, frames: list[bytes]) -> None:
        if self._stop.is_set():
            raise RuntimeError("transport closed")
        self._out.put(("send", (channel, frames)))

    def poll(self, timeout_ms: int) -> list[tuple[str, list[bytes]]]:
        ready: list[tuple[str, list[bytes]]] = []
        try:
            ready.append(self._in.get(timeout=timeout_ms / 1000.0))
        except queue.Empty:
            return ready
        while True:
            try:
                ready.append(self._in.get_nowait())
            except queue.Empty:
                return ready

    def heartbeat(self, timeout_ms: int) -> bool:
        with self._hb_lock:
            done = threading.Event()
            result: dict[str, bool] = {}
            self._out.put(("hb", (done, result, timeout_ms)))
            done.wait((timeout_ms + 500) / 1000.0)
            return result.get("ok", False)

    def interrupt(self) -> None:
        # message-mode interrupt on the control channel
        msg = build_message("interrupt_request", {}, uuid.uuid4().hex)
        try:
            self.send(ch.CONTROL, to_frames(msg, self.connection.key))
        except Exception:
            pass

    def kill(self) -> None:
        self._killed = True
        if self.process is not None and self.process.poll() is None:
            self.process.kill()
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass
        self._stop.set()

    def close(self) -> None:
        self.kill()

    def is_alive(self) -> bool:
        if self._stop.is_set() or self._killed:
            return False
        if self.process is not None:
            return self.process.poll() is None
        return True


class SubprocessKernelLauncher:
    """Launch kernels as real processes from an argv template.

    The template is the kernelspec argv with ``{connection_file}``
    substituted; the default template starts this package's mock kernel
    under the environment's interpreter.
    """

    uses_network = True

    def __init__(self, argv_template: Optional[list[str]] = None) -> None:
        self.argv_template = argv_template
        self.spawned: list[subprocess.Popen] = []

    def _argv(self, env, connection_file: Path) -> list[str]:
        template = self.argv_template or [
            str(env.interpreter_path),
            "-m",
            "repro_lens.kernel.mock_kernel",
            "-f",
            "{connection_file}",
        ]
        return [part.replace("{connection_file}", str(connection_file)) for part in template]

    def launch(self, connection, env, spec, cwd: Path, connection_file: Path) -> ZmqClientTransport:
        from .session import KernelLaunchFailed

        argv = self._argv(env, connection_file)
        try:
            process = subprocess.Popen(
                argv,
                cwd=str(cwd),
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
                stdin=subprocess.DEVNULL,
            )
        except (OSError, ValueError) as exc:
            raise KernelLaunchFailed(f"could not start kernel {argv!r}: {exc}") from exc
        self.spawned.append(process)
        return ZmqClientTransport(connection, process)
