"""Content-aware comparison of stored notebook outputs against reproduced ones.

Outputs are normalized before comparison so that incidental differences
(execution counters, ANSI colour codes, stream chunking, traceback paths)
do not count as real divergence. Binary payloads are compared by digest.
"""

from __future__ import annotations

import base64
import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .notebook import Notebook, Output, OutputKind

# CSI family: ESC [ parameters final-byte
_ANSI_CSI = re.compile(r"\x1b\[[0-9;?]*[ -/]*[@-~]")

# Binary payloads are reduced to this fixpoint form so normalization is
# idempotent: an already-digested payload is kept verbatim.
_DIGEST_FORM = re.compile(r"^sha256:[0-9a-f]{64};length=\d+$")

# Mime types whose payloads are text; everything else is treated as binary
# (base64 in the source document) and reduced to a digest.
_TEXTUAL_MIME_TYPES = {
    "application/json",
    "application/javascript",
    "image/svg+xml",
}

# Normalized outputs are plain Output values in canonical form: no extra
# metadata, no execution counts, coalesced streams, digested binaries.
NormalizedOutput = Output


def _is_textual_mime(mime: str) -> bool:
    return mime.startswith("text/") or mime in _TEXTUAL_MIME_TYPES or mime.endswith("+json")


def _normalize_text(text: str) -> str:
    text = _ANSI_CSI.sub("", text)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in text.split("\n"))


def _digest_payload(payload: object) -> str:
    if isinstance(payload, str):
        if _DIGEST_FORM.match(payload):
            return payload
        try:
            blob = base64.b64decode(payload, validate=True)
        except Exception:
            blob = payload.encode("utf-8")
    else:
        blob = repr(payload).encode("utf-8")
    return f"sha256:{hashlib.sha256(blob).hexdigest()};length={len(blob)}"


def _normalize_bundle(data: dict | None) -> dict[str, object]:
    bundle: dict[str, object] = {}
    for mime in sorted((data or {}).keys()):
        payload = (data or {})[mime]
        if _is_textual_mime(mime):
            bundle[mime] = _normalize_text(payload) if isinstance(payload, str) else payload
        else:
            bundle[mime] = _digest_payload(payload)
    return bundle


def _normalize_one(output: Output) -> NormalizedOutput:
    if output.kind is OutputKind.STREAM:
        return Output.stream(output.stream_name or "", _normalize_text(output.text or ""))
    if output.kind is OutputKind.ERROR:
        return Output.error(output.ename or "", output.evalue or "")
    return Output(kind=output.kind, data=_normalize_bundle(output.data))


def normalize_outputs(outputs: Sequence[Output]) -> tuple[NormalizedOutput, ...]:
    """Canonicalize an output list for comparison.

    Adjacent stream outputs with the same stream name are coalesced into one;
    execution counters and tracebacks are discarded; deterministic, idempotent,
    and kind-preserving.
    """
    merged: list[Output] = []
    for out in outputs:
        if (
            out.kind is OutputKind.STREAM
            and merged
            and merged[-1].kind is OutputKind.STREAM
            and merged[-1].stream_name == out.stream_name
        ):
            merged[-1] = Output.stream(out.stream_name or "", (merged[-1].text or "") + (out.text or ""))
        else:
            merged.append(out)
    return tuple(_normalize_one(o) for o in merged)


class CellVerdict(Enum):
    SAME = "same"
    DIFFERENT = "different"
    ORIGINAL_EMPTY = "original_empty"
    REPRODUCED_MISSING = "reproduced_missing"


@dataclass(frozen=True)
class DiffDetail:
    position: int
    original: Optional[NormalizedOutput]
    reproduced: Optional[NormalizedOutput]


@dataclass(frozen=True)
class CellDiff:
    index: int
    verdict: CellVerdict
    detail: tuple[DiffDetail, ...] = ()


class NotebookVerdict(Enum):
    SAME_RESULTS = "same_results"
    DIFFERENT_RESULTS = "different_results"
    NOT_COMPARABLE = "not_comparable"


@dataclass(frozen=True)
class NotebookDiff:
    cells: tuple[CellDiff, ...]
    overall: NotebookVerdict
    reason: Optional[str] = None


def diff_cell(original: Sequence[Output], reproduced: Sequence[Output], index: int) -> CellDiff:
    """Compare one code cell's stored outputs against its reproduced outputs."""
    orig_norm = normalize_outputs(original)
    repr_norm = normalize_outputs(reproduced)
    if orig_norm == repr_norm:
        return CellDiff(index=index, verdict=CellVerdict.SAME)
    if not orig_norm and repr_norm:
        return CellDiff(index=index, verdict=CellVerdict.ORIGINAL_EMPTY)
    if orig_norm and not repr_norm:
        detail = tuple(DiffDetail(i, o, None) for i, o in enumerate(orig_norm))
        return CellDiff(index=index, verdict=CellVerdict.REPRODUCED_MISSING, detail=detail)
    details: list[DiffDetail] = []
    for pos in range(max(len(orig_norm), len(repr_norm))):
        o = orig_norm[pos] if pos < len(orig_norm) else None
        r = repr_norm[pos] if pos < len(repr_norm) else None
        if o != r:
            details.append(DiffDetail(pos, o, r))
    return CellDiff(index=index, verdict=CellVerdict.DIFFERENT, detail=tuple(details))


def diff_notebook(original: Notebook, record) -> NotebookDiff:
    """Cell-aligned diff of a completed run against the stored notebook.

    ``record`` is a run-orchestrator NotebookRunRecord; runs that did not
    complete are NotComparable.
    """
    from .orchestrator import TerminalKind  # local import to avoid a cycle

    if record.terminal_status.kind is not TerminalKind.COMPLETED:
        reason = {
            TerminalKind.HALTED_ON_ERROR: "execution halted",
            TerminalKind.TIMED_OUT: "execution timed out",
            TerminalKind.NOT_EXECUTED: f"not executed: {record.terminal_status.reason}",
        }[record.terminal_status.kind]
        return NotebookDiff(cells=(), overall=NotebookVerdict.NOT_COMPARABLE, reason=reason)

    reproduced_by_index = {idx: result for idx, result in record.cell_records}
    diffs: list[CellDiff] = []
    for cell in original.code_cells():
        if cell.index not in reproduced_by_index:
            continue
        result = reproduced_by_index[cell.index]
        diffs.append(diff_cell(cell.outputs, result.outputs, cell.index))
    comparable_ok = all(d.verdict in (CellVerdict.SAME, CellVerdict.ORIGINAL_EMPTY) for d in diffs)
    overall = NotebookVerdict.SAME_RESULTS if comparable_ok else NotebookVerdict.DIFFERENT_RESULTS
    return NotebookDiff(cells=tuple(diffs), overall=overall)
