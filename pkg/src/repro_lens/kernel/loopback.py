"""In-process kernel transport: the mini kernel runs on a background thread.

No sockets, no processes: frames are passed through queues, but they are
real signed multipart frames, so the full protocol path (signing, framing,
attribution, idle tracking) is exercised exactly as over the network.
"""

from __future__ import annotations

import queue
import threading
from pathlib import Path
from typing import Callable, Optional

from . import transport as ch
from .minikernel import Behavior, KernelBrain, PythonExecBehavior

_SENTINEL = (None, None)


class TransportClosed(RuntimeError):
    pass


class LoopbackTransport:
    def __init__(self, brain: KernelBrain) -> None:
        self._brain = brain
        self._to_kernel: queue.Queue = queue.Queue()
        self._stdin_to_kernel: queue.Queue = queue.Queue()
        self._to_client: queue.Queue = queue.Queue()
        self._alive = True
        self._stopping = False
        self._worker = threading.Thread(target=self._run, name="loopback-kernel", daemon=True)
        self._worker.start()

    # --- kernel side -------------------------------------------------------

    def _emit(self, channel: str, frames: list[bytes]) -> None:
        if self._alive:
            self._to_client.put((channel, frames))

    def _read_stdin(self, timeout_ms: int) -> Optional[list[bytes]]:
        try:
            return self._stdin_to_kernel.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            return None

    def _run(self) -> None:
        while not self._stopping:
            channel, frames = self._to_kernel.get()
            if channel is None:
                break
            keep_going = self._brain.handle(channel, frames, self._emit, self._read_stdin)
            if not keep_going:
                break
        self._alive = False

    # --- client side -------------------------------------------------------

    def send(self, channel: str, frames: list[bytes]) -> None:
        if not self._alive:
            raise TransportClosed("kernel is gone")
        if channel == ch.STDIN:
            self._stdin_to_kernel.put(frames)
        elif channel == ch.CONTROL:
            # control must not queue behind a busy execute: dispatch inline
            keep_going = self._brain.handle(channel, frames, self._emit, self._read_stdin)
            if not keep_going:
                self.kill()
        else:
            self._to_kernel.put((channel, frames))

    def poll(self, timeout_ms: int) -> list[tuple[str, list[bytes]]]:
        ready: list[tuple[str, list[bytes]]] = []
        try:
            ready.append(self._to_client.get(timeout=timeout_ms / 1000.0))
        except queue.Empty:
            return ready
        while True:
            try:
                ready.append(self._to_client.get_nowait())
            except queue.Empty:
                return ready

    def heartbeat(self, timeout_ms: int) -> bool:
        return self._alive

    def interrupt(self) -> None:
        self._brain.cancel.set()

    def kill(self) -> None:
        self._stopping = True
        self._alive = False
        self._brain.cancel.set()
        self._to_kernel.put(_SENTINEL)

    def close(self) -> None:
        self.kill()

    def is_alive(self) -> bool:
        return self._alive


class LoopbackLauncher:
    """Launcher whose kernels live in this process.

    ``behavior_factory`` builds a fresh behavior per kernel (a new namespace
    per notebook). The launcher keeps a registry of everything it spawned so
    tests can assert that no kernel outlives its job.
    """

    uses_network = False

    def __init__(
        self,
        behavior_factory: Callable[[Path], Behavior] | None = None,
        protocol_version: str | None = None,
        fail_with: str | None = None,
    ) -> None:
        self.behavior_factory = behavior_factory or (lambda cwd: PythonExecBehavior(workdir=cwd))
        self.protocol_version = protocol_version
        self.fail_with = fail_with
        self.spawned: list[LoopbackTransport] = []

    def launch(self, connection, env, spec, cwd: Path, connection_file: Path) -> LoopbackTransport:
        from .session import KernelLaunchFailed

        if self.fail_with:
            raise KernelLaunchFailed(self.fail_with)
        brain = KernelBrain(key=connection.key, behavior=self.behavior_factory(Path(cwd)))
        if self.protocol_version is not None:
            brain.protocol_version = self.protocol_version
        transport = LoopbackTransport(brain)
        self.spawned.append(transport)
        return transport
