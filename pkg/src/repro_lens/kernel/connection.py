"""Kernel connection info and the on-disk connection file."""

from __future__ import annotations

import json
import secrets
import socket
from dataclasses import dataclass
from pathlib import Path

from .wire import SIGNATURE_SCHEME


@dataclass(frozen=True)
class ConnectionInfo:
    transport: str
    ip: str
    shell_port: int
    iopub_port: int
    stdin_port: int
    control_port: int
    hb_port: int
    key: bytes
    signature_scheme: str = SIGNATURE_SCHEME

    def __post_init__(self) -> None:
        ports = self.ports
        if len(set(ports)) != 5 or any(p == 0 for p in ports):
            raise ValueError(f"five distinct nonzero ports required, got {ports}")
        if self.signature_scheme and not self.key:
            raise ValueError("key must be non-empty when a signature scheme is set")

    @property
    def ports(self) -> tuple[int, int, int, int, int]:
        return (self.shell_port, self.iopub_port, self.stdin_port, self.control_port, self.hb_port)


def _free_tcp_ports(count: int, ip: str) -> list[int]:
    # bind ephemeral sockets, keep them open until all ports are gathered so
    # the OS cannot hand out duplicates
    socks: list[socket.socket] = []
    try:
        for _ in range(count):
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.bind((ip, 0))
            socks.append(s)
        return [s.getsockname()[1] for s in socks]
    finally:
        for s in socks:
            s.close()


def generate_connection_info(transport: str = "tcp", ip: str = "127.0.0.1", bind_real_ports: bool = True) -> ConnectionInfo:
    """Fresh connection info with five distinct ports and a random key.

    With ``bind_real_ports`` false (in-process transports), ports are drawn
    from the dynamic range without touching the network stack.
    """
    if bind_real_ports:
        ports = _free_tcp_ports(5, ip)
    else:
        base = 49152 + secrets.randbelow(10_000)
        ports = [base + i for i in range(5)]
    return ConnectionInfo(
        transport=transport,
        ip=ip,
        shell_port=ports[0],
        iopub_port=ports[1],
        stdin_port=ports[2],
        control_port=ports[3],
        hb_port=ports[4],
        key=secrets.token_hex(16).encode("ascii"),
    )


def write_connection_file(info: ConnectionInfo, directory: Path, name: str = "kernel-connection.json") -> Path:
    path = Path(directory) / name
    doc = {
        "transport": info.transport,
        "ip": info.ip,
        "shell_port": info.shell_port,
        "iopub_port": info.iopub_port,
        "stdin_port": info.stdin_port,
        "control_port": info.control_port,
        "hb_port": info.hb_port,
        "key": info.key.decode("ascii"),
        "signature_scheme": info.signature_scheme,
    }
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


def read_connection_file(path: Path) -> ConnectionInfo:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ConnectionInfo(
        transport=doc["transport"],
        ip=doc["ip"],
        shell_port=int(doc["shell_port"]),
        iopub_port=int(doc["iopub_port"]),
        stdin_port=int(doc["stdin_port"]),
        control_port=int(doc["control_port"]),
        hb_port=int(doc["hb_port"]),
        key=str(doc["key"]).encode("ascii"),
        signature_scheme=doc.get("signature_scheme", SIGNATURE_SCHEME),
    )
