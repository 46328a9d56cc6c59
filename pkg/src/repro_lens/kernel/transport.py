"""Channel names and the transport/launcher contracts.

A transport moves signed multipart frames between the client and one kernel;
a launcher brings a kernel into existence and hands back its transport.
Two transports exist: the ZMQ socket transport for real kernel processes and
an in-process loopback transport for tests and mock-kernel runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Protocol

if TYPE_CHECKING:
    from ..environment import EnvironmentHandle
    from ..notebook import KernelSpecInfo
    from .connection import ConnectionInfo

SHELL = "shell"
IOPUB = "iopub"
STDIN = "stdin"
CONTROL = "control"
HB = "hb"


class KernelTransport(Protocol):
    def send(self, channel: str, frames: list[bytes]) -> None: ...

    def poll(self, timeout_ms: int) -> list[tuple[str, list[bytes]]]:
        """Drain ready incoming messages as (channel, frames) pairs."""
        ...

    def heartbeat(self, timeout_ms: int) -> bool: ...

    def interrupt(self) -> None: ...

    def kill(self) -> None: ...

    def close(self) -> None: ...

    def is_alive(self) -> bool: ...


class KernelLauncher(Protocol):
    def launch(
        self,
        connection: "ConnectionInfo",
        env: "EnvironmentHandle",
        spec: "KernelSpecInfo | None",
        cwd: Path,
        connection_file: Path,
    ) -> KernelTransport: ...
