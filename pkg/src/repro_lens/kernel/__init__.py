"""Kernel messaging protocol client: wire format, transports, sessions."""

from .connection import ConnectionInfo
from .session import (
    CellExecutionResult,
    CellStatus,
    HandshakeTimeout,
    KernelLaunchFailed,
    KernelSession,
    SessionDead,
    execute,
    shutdown,
    start_kernel,
)
from .wire import EmptyKey, SignatureMismatch, WireMessage, sign_message, verify_signature

__all__ = [
    "CellExecutionResult",
    "CellStatus",
    "ConnectionInfo",
    "EmptyKey",
    "HandshakeTimeout",
    "KernelLaunchFailed",
    "KernelSession",
    "SessionDead",
    "SignatureMismatch",
    "WireMessage",
    "execute",
    "shutdown",
    "sign_message",
    "start_kernel",
    "verify_signature",
]
