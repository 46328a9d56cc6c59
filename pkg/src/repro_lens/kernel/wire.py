"""Kernel messaging wire format: HMAC signing and multipart frame codec.

A message travels as ``[identities..., "<IDS|MSG>", signature, header,
parent_header, metadata, content]`` where the four trailing frames are JSON
and the signature is HMAC-SHA256 over their concatenation, hex-encoded.
Protocol semantics are pinned to messaging v5.x.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Sequence

DELIMITER = b"<IDS|MSG>"
PROTOCOL_VERSION = "5.3"
SIGNATURE_SCHEME = "hmac-sha256"


class EmptyKey(ValueError):
    """Signing requires a non-empty key."""


class SignatureMismatch(ValueError):
    """A received message's signature does not match its frames."""


class FramingError(ValueError):
    """The multipart frame list is not a well-formed message."""


def sign_message(key: bytes, frames: Sequence[bytes]) -> str:
    """HMAC-SHA256 over the concatenated frames, as lowercase hex."""
    if not key:
        raise EmptyKey("signing key must be non-empty")
    mac = hmac.new(key, digestmod=hashlib.sha256)
    for frame in frames:
        mac.update(frame)
    return mac.hexdigest()


def verify_signature(key: bytes, frames: Sequence[bytes], signature: str) -> bool:
    return hmac.compare_digest(sign_message(key, frames), signature)


@dataclass(frozen=True)
class WireMessage:
    identities: tuple[bytes, ...]
    signature: str
    header: dict[str, Any]
    parent_header: dict[str, Any]
    metadata: dict[str, Any] = field(default_factory=dict)
    content: dict[str, Any] = field(default_factory=dict)

    @property
    def msg_type(self) -> str:
        return self.header.get("msg_type", "")

    @property
    def msg_id(self) -> str:
        return self.header.get("msg_id", "")

    @property
    def parent_msg_id(self) -> str:
        return self.parent_header.get("msg_id", "")


def new_header(msg_type: str, session: str, username: str = "repro-lens") -> dict[str, Any]:
    return {
        "msg_id": uuid.uuid4().hex,
        "session": session,
        "username": username,
        "date": datetime.now(timezone.utc).isoformat(),
        "msg_type": msg_type,
        "version": PROTOCOL_VERSION,
    }


def build_message(
    msg_type: str,
    content: dict[str, Any],
    session: str,
    parent: dict[str, Any] | None = None,
    identities: Sequence[bytes] = (),
    metadata: dict[str, Any] | None = None,
    username: str = "repro-lens",
) -> WireMessage:
    return WireMessage(
        identities=tuple(identities),
        signature="",
        header=new_header(msg_type, session, username),
        parent_header=dict(parent or {}),
        metadata=dict(metadata or {}),
        content=dict(content),
    )


def _dump(obj: dict[str, Any]) -> bytes:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True).encode("utf-8")


def to_frames(msg: WireMessage, key: bytes) -> list[bytes]:
    """Serialize and sign; returns the full multipart frame list."""
    payload = [_dump(msg.header), _dump(msg.parent_header), _dump(msg.metadata), _dump(msg.content)]
    signature = sign_message(key, payload)
    return [*msg.identities, DELIMITER, signature.encode("ascii"), *payload]


def parse_frames(frames: Sequence[bytes], key: bytes, verify: bool = True) -> WireMessage:
    """Decode a multipart frame list; raises on malformed or tampered input."""
    try:
        delim_index = frames.index(DELIMITER) if isinstance(frames, list) else list(frames).index(DELIMITER)
    except ValueError:
        raise FramingError("missing <IDS|MSG> delimiter") from None
    identities = tuple(frames[:delim_index])
    rest = list(frames[delim_index + 1 :])
    if len(rest) < 5:
        raise FramingError(f"expected signature plus 4 payload frames, got {len(rest)}")
    signature = rest[0].decode("ascii", errors="replace")
    payload = rest[1:5]
    if verify and not verify_signature(key, payload, signature):
        raise SignatureMismatch("HMAC signature mismatch")
    try:
        header, parent_header, metadata, content = (json.loads(p.decode("utf-8")) for p in payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FramingError(f"payload frame is not JSON: {exc}") from exc
    return WireMessage(
        identities=identities,
        signature=signature,
        header=header,
        parent_header=parent_header,
        metadata=metadata,
        content=content,
    )
