"""Typed in-memory model for nbformat 4.x notebook documents.

Parsing is strict: only format major version 4 is accepted, and schema
problems are reported as exceptions rather than silently repaired. Unknown
metadata is kept verbatim in opaque side maps so a parsed notebook can be
re-serialized without losing information the model does not interpret.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional


class NotebookError(Exception):
    """Base class for notebook parsing problems."""


class MalformedJson(NotebookError):
    """The raw document is not valid JSON."""


class UnsupportedFormat(NotebookError):
    """The document is JSON but not an nbformat-4 notebook."""


class SchemaViolation(NotebookError):
    """The document is nbformat-4 JSON but breaks a structural rule."""


class CellKind(Enum):
    CODE = "code"
    MARKDOWN = "markdown"
    RAW = "raw"


class OutputKind(Enum):
    STREAM = "stream"
    EXECUTE_RESULT = "execute_result"
    DISPLAY_DATA = "display_data"
    ERROR = "error"


# MIME payloads: str after multiline-join, or an opaque JSON value for
# structured mime types (application/json and friends).
MimeBundle = dict[str, Any]


@dataclass(frozen=True)
class Output:
    kind: OutputKind
    # stream fields
    stream_name: Optional[str] = None
    text: Optional[str] = None
    # execute_result / display_data fields
    data: Optional[MimeBundle] = None
    execution_count: Optional[int] = None
    # error fields
    ename: Optional[str] = None
    evalue: Optional[str] = None
    traceback: tuple[str, ...] = ()
    # unrecognized keys (e.g. output metadata), kept for round-trips
    extra: dict[str, Any] = field(default_factory=dict)

    @staticmethod
    def stream(name: str, text: str) -> "Output":
        return Output(kind=OutputKind.STREAM, stream_name=name, text=text)

    @staticmethod
    def execute_result(data: MimeBundle, execution_count: Optional[int] = None) -> "Output":
        return Output(kind=OutputKind.EXECUTE_RESULT, data=data, execution_count=execution_count)

    @staticmethod
    def display_data(data: MimeBundle) -> "Output":
        return Output(kind=OutputKind.DISPLAY_DATA, data=data)

    @staticmethod
    def error(ename: str, evalue: str = "", traceback: tuple[str, ...] = ()) -> "Output":
        return Output(kind=OutputKind.ERROR, ename=ename, evalue=evalue, traceback=tuple(traceback))


@dataclass(frozen=True)
class Cell:
    index: int
    kind: CellKind
    source: str
    execution_count: Optional[int] = None
    outputs: tuple[Output, ...] = ()
    # verbatim cell metadata / id / attachments for lossless re-serialization
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class KernelSpecInfo:
    name: str
    display_name: Optional[str] = None


@dataclass(frozen=True)
class Notebook:
    format_major: int
    format_minor: int
    kernel_spec: Optional[KernelSpecInfo]
    language_name: Optional[str]
    language_version: Optional[str]
    cells: tuple[Cell, ...]
    source_path: str = ""
    # the document's metadata object, verbatim (kernel_spec and language
    # fields above are parsed views into it)
    metadata: dict[str, Any] = field(default_factory=dict)
    # top-level keys other than nbformat/nbformat_minor/metadata/cells
    extra: dict[str, Any] = field(default_factory=dict)

    def code_cells(self) -> list[Cell]:
        return [c for c in self.cells if c.kind is CellKind.CODE]


@dataclass(frozen=True)
class ValidityReport:
    has_valid_format: bool
    has_kernel_spec: bool
    has_language_version: bool

    @property
    def overall_valid(self) -> bool:
        return self.has_valid_format and self.has_kernel_spec and self.has_language_version


def _join_multiline(value: Any) -> Any:
    """nbformat stores text fields as either a string or a list of lines."""
    if isinstance(value, list) and all(isinstance(x, str) for x in value):
        return "".join(value)
    return value


def _parse_mime_bundle(raw: Any, where: str) -> MimeBundle:
    if not isinstance(raw, dict):
        raise SchemaViolation(f"{where}: mime bundle must be an object")
    bundle: MimeBundle = {}
    for mime, payload in raw.items():
        bundle[str(mime)] = _join_multiline(payload)
    return bundle


def _parse_output(raw: Any, where: str) -> Output:
    if not isinstance(raw, dict):
        raise SchemaViolation(f"{where}: output must be an object")
    output_type = raw.get("output_type")
    extra = {k: v for k, v in raw.items() if k not in _KNOWN_OUTPUT_KEYS.get(output_type, ())}
    extra.pop("output_type", None)
    if output_type == "stream":
        name = raw.get("name")
        if name not in ("stdout", "stderr"):
            raise SchemaViolation(f"{where}: stream output needs name stdout|stderr")
        text = _join_multiline(raw.get("text", ""))
        if not isinstance(text, str):
            raise SchemaViolation(f"{where}: stream text must be a string or list of strings")
        return Output(kind=OutputKind.STREAM, stream_name=name, text=text, extra=extra)
    if output_type == "execute_result":
        count = raw.get("execution_count")
        if count is not None and not isinstance(count, int):
            raise SchemaViolation(f"{where}: execution_count must be an integer or null")
        return Output(
            kind=OutputKind.EXECUTE_RESULT,
            data=_parse_mime_bundle(raw.get("data", {}), where),
            execution_count=count,
            extra=extra,
        )
    if output_type == "display_data":
        return Output(
            kind=OutputKind.DISPLAY_DATA,
            data=_parse_mime_bundle(raw.get("data", {}), where),
            extra=extra,
        )
    if output_type == "error":
        ename = raw.get("ename")
        if not isinstance(ename, str) or not ename:
            raise SchemaViolation(f"{where}: error output needs a non-empty ename")
        tb = raw.get("traceback", [])
        if not isinstance(tb, list) or not all(isinstance(x, str) for x in tb):
            raise SchemaViolation(f"{where}: error traceback must be a list of strings")
        return Output(
            kind=OutputKind.ERROR,
            ename=ename,
            evalue=str(raw.get("evalue", "")),
            traceback=tuple(tb),
            extra=extra,
        )
    raise SchemaViolation(f"{where}: unknown output_type {output_type!r}")


_KNOWN_OUTPUT_KEYS = {
    "stream": ("output_type", "name", "text"),
    "execute_result": ("output_type", "data", "execution_count"),
    "display_data": ("output_type", "data"),
    "error": ("output_type", "ename", "evalue", "traceback"),
}

_KNOWN_CELL_KEYS = ("cell_type", "source", "execution_count", "outputs")


def _parse_cell(raw: Any, index: int) -> Cell:
    where = f"cells[{index}]"
    if not isinstance(raw, dict):
        raise SchemaViolation(f"{where}: cell must be an object")
    try:
        kind = CellKind(raw["cell_type"])
    except KeyError:
        raise SchemaViolation(f"{where}: missing cell_type") from None
    except ValueError:
        raise SchemaViolation(f"{where}: unknown cell_type {raw['cell_type']!r}") from None
    if "source" not in raw:
        raise SchemaViolation(f"{where}: missing source")
    source = _join_multiline(raw["source"])
    if not isinstance(source, str):
        raise SchemaViolation(f"{where}: source must be a string or list of strings")
    extra = {k: v for k, v in raw.items() if k not in _KNOWN_CELL_KEYS}

    if kind is CellKind.CODE:
        count = raw.get("execution_count")
        if count is not None:
            if not isinstance(count, int):
                raise SchemaViolation(f"{where}: execution_count must be an integer or null")
            if count < 1:
                raise SchemaViolation(f"{where}: execution_count must be >= 1")
        raw_outputs = raw.get("outputs", [])
        if not isinstance(raw_outputs, list):
            raise SchemaViolation(f"{where}: outputs must be a list")
        outputs = tuple(_parse_output(o, f"{where}.outputs[{i}]") for i, o in enumerate(raw_outputs))
        return Cell(index=index, kind=kind, source=source, execution_count=count, outputs=outputs, extra=extra)

    # markdown/raw: the format does not give these cells outputs or counts
    if raw.get("outputs"):
        raise SchemaViolation(f"{where}: {kind.value} cell must not carry outputs")
    if raw.get("execution_count") is not None:
        raise SchemaViolation(f"{where}: {kind.value} cell must not carry execution_count")
    return Cell(index=index, kind=kind, source=source, extra=extra)


def parse_notebook(raw: bytes | str, path: str = "") -> Notebook:
    """Parse an nbformat-4 JSON document into a :class:`Notebook`.

    Raises :class:`MalformedJson`, :class:`UnsupportedFormat`, or
    :class:`SchemaViolation`.
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"{path}: not UTF-8 ({exc})") from exc
    else:
        text = raw
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise UnsupportedFormat(f"{path}: top level is not an object")
    major = doc.get("nbformat")
    if major != 4:
        raise UnsupportedFormat(f"{path}: nbformat major version {major!r} is not supported (need 4)")
    minor = doc.get("nbformat_minor")
    if not isinstance(minor, int):
        minor = 0
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaViolation(f"{path}: metadata must be an object")
    raw_cells = doc.get("cells")
    if not isinstance(raw_cells, list):
        raise SchemaViolation(f"{path}: cells must be a list")
    cells = tuple(_parse_cell(c, i) for i, c in enumerate(raw_cells))

    kernel_spec = None
    ks = metadata.get("kernelspec")
    if isinstance(ks, dict) and isinstance(ks.get("name"), str) and ks["name"]:
        display = ks.get("display_name")
        kernel_spec = KernelSpecInfo(name=ks["name"], display_name=display if isinstance(display, str) else None)

    language_name = None
    language_version = None
    li = metadata.get("language_info")
    if isinstance(li, dict):
        if isinstance(li.get("name"), str) and li["name"]:
            language_name = li["name"]
        if isinstance(li.get("version"), str) and li["version"]:
            language_version = li["version"]
    if language_name is None and isinstance(ks, dict) and isinstance(ks.get("language"), str) and ks["language"]:
        language_name = ks["language"]

    extra = {k: v for k, v in doc.items() if k not in ("nbformat", "nbformat_minor", "metadata", "cells")}
    return Notebook(
        format_major=major,
        format_minor=minor,
        kernel_spec=kernel_spec,
        language_name=language_name,
        language_version=language_version,
        cells=cells,
        source_path=path,
        metadata=metadata,
        extra=extra,
    )


_SEMVERISH = None  # compiled lazily below


def _is_semverish(version: str) -> bool:
    """major[.minor[.patch]] with numeric components, e.g. "3.7.3"."""
    global _SEMVERISH
    if _SEMVERISH is None:
        import re

        _SEMVERISH = re.compile(r"^\d+(\.\d+){0,2}([^\s]*)$")
    return bool(_SEMVERISH.match(version))


def validate(nb: Notebook) -> ValidityReport:
    """Compute the three validity flags. Total: never raises."""
    has_format = nb.format_major == 4
    has_kernel = nb.kernel_spec is not None and bool(nb.kernel_spec.name)
    has_version = nb.language_version is not None and _is_semverish(nb.language_version)
    return ValidityReport(
        has_valid_format=has_format,
        has_kernel_spec=has_kernel,
        has_language_version=has_version,
    )


def _output_to_json(output: Output) -> dict[str, Any]:
    doc: dict[str, Any] = {"output_type": output.kind.value}
    if output.kind is OutputKind.STREAM:
        doc["name"] = output.stream_name
        doc["text"] = output.text
    elif output.kind is OutputKind.EXECUTE_RESULT:
        doc["data"] = dict(output.data or {})
        doc["execution_count"] = output.execution_count
    elif output.kind is OutputKind.DISPLAY_DATA:
        doc["data"] = dict(output.data or {})
    else:
        doc["ename"] = output.ename
        doc["evalue"] = output.evalue
        doc["traceback"] = list(output.traceback)
    doc.update(output.extra)
    return doc


def _cell_to_json(cell: Cell) -> dict[str, Any]:
    doc: dict[str, Any] = {"cell_type": cell.kind.value, "source": cell.source}
    if cell.kind is CellKind.CODE:
        doc["execution_count"] = cell.execution_count
        doc["outputs"] = [_output_to_json(o) for o in cell.outputs]
    doc.update(cell.extra)
    if "metadata" not in doc:
        doc["metadata"] = {}
    return doc


def serialize_notebook(nb: Notebook) -> bytes:
    """Emit nbformat-4 JSON. parse(serialize(nb)) is structurally equal to nb."""
    doc: dict[str, Any] = {
        "nbformat": nb.format_major,
        "nbformat_minor": nb.format_minor,
        "metadata": nb.metadata,
        "cells": [_cell_to_json(c) for c in nb.cells],
    }
    doc.update(nb.extra)
    return json.dumps(doc, ensure_ascii=False, indent=1).encode("utf-8")
