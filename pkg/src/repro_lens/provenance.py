"""Prospective and retrospective provenance as RDF, serialized to Turtle.

The vocabulary is a minimal subset aligned with the W3C provenance
vocabulary (entities, activities, plans, used/generated, start/end times)
plus a small custom namespace for notebook-specific terms. Node IRIs are
minted deterministically from (repository ref, notebook path, cell index),
so exporting the same evidence twice yields the identical triple set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union
from urllib.parse import quote

from .diffing import normalize_outputs
from .notebook import Notebook, Output, OutputKind

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
PROV = "http://www.w3.org/ns/prov#"
XSD = "http://www.w3.org/2001/XMLSchema#"
RL = "urn:repro-lens:vocab#"

PREFIXES = {"rdf": RDF, "prov": PROV, "xsd": XSD, "rl": RL}

# payloads above this size are stored as digest literals, not inline
INLINE_TEXT_LIMIT = 64 * 1024


@dataclass(frozen=True)
class Iri:
    value: str


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: Optional[str] = None
    lang: Optional[str] = None


Term = Union[Iri, Literal]
Triple = tuple[str, str, Term]


@dataclass
class ProvenanceGraph:
    triples: set[Triple] = field(default_factory=set)
    namespaces: dict[str, str] = field(default_factory=lambda: dict(PREFIXES))

    def add(self, subject: str, predicate: str, obj: Term) -> None:
        self.triples.add((subject, predicate, obj))

    def merge(self, other: "ProvenanceGraph") -> None:
        self.triples |= other.triples
        self.namespaces.update(other.namespaces)

    def subjects_of_type(self, type_iri: str) -> set[str]:
        return {s for (s, p, o) in self.triples if p == RDF + "type" and isinstance(o, Iri) and o.value == type_iri}


def _text(value: str) -> Literal:
    return Literal(value)


def _integer(value: int) -> Literal:
    return Literal(str(value), datatype=XSD + "integer")


def _datetime(value) -> Literal:
    return Literal(value.isoformat(), datatype=XSD + "dateTime")


def _segment(raw: str) -> str:
    return quote(raw, safe="")


def notebook_iri(repo_ref: str, path: str) -> str:
    return f"urn:repro-lens:{_segment(repo_ref)}:{_segment(path)}"


def step_iri(repo_ref: str, path: str, cell_index: int) -> str:
    return f"{notebook_iri(repo_ref, path)}:{cell_index}"


def run_iri(repo_ref: str, path: str, run_id: str) -> str:
    return f"{notebook_iri(repo_ref, path)}:run:{_segment(run_id)}"


def activity_iri(repo_ref: str, path: str, cell_index: int, run_id: str) -> str:
    return f"{step_iri(repo_ref, path, cell_index)}:run:{_segment(run_id)}"


def export_prospective(nb: Notebook, repo_ref: str = "local") -> ProvenanceGraph:
    """The notebook as a plan: one plan node, one ordered step node per cell."""
    g = ProvenanceGraph()
    plan = notebook_iri(repo_ref, nb.source_path)
    g.add(plan, RDF + "type", Iri(PROV + "Plan"))
    g.add(plan, RDF + "type", Iri(PROV + "Entity"))
    g.add(plan, RL + "path", _text(nb.source_path))
    g.add(plan, RL + "formatVersion", _text(f"{nb.format_major}.{nb.format_minor}"))
    if nb.language_name:
        g.add(plan, RL + "language", _text(nb.language_name))
    if nb.language_version:
        g.add(plan, RL + "languageVersion", _text(nb.language_version))
    if nb.kernel_spec is not None:
        g.add(plan, RL + "kernel", _text(nb.kernel_spec.name))
    for cell in nb.cells:
        step = step_iri(repo_ref, nb.source_path, cell.index)
        g.add(plan, RL + "hasStep", Iri(step))
        g.add(step, RDF + "type", Iri(RL + "Step"))
        g.add(step, RDF + "type", Iri(PROV + "Entity"))
        g.add(step, RL + "order", _integer(cell.index))
        g.add(step, RL + "cellKind", _text(cell.kind.value))
        g.add(step, RL + "sourceText", _text(cell.source))
        if cell.execution_count is not None:
            g.add(step, RL + "storedExecutionCount", _integer(cell.execution_count))
    return g


def _output_payload_literal(output: Output) -> Literal:
    if output.kind is OutputKind.STREAM:
        text = output.text or ""
    elif output.kind is OutputKind.ERROR:
        text = f"{output.ename}: {output.evalue}"
    else:
        text = json.dumps(output.data or {}, sort_keys=True, ensure_ascii=False)
    if len(text.encode("utf-8")) > INLINE_TEXT_LIMIT:
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return Literal(f"sha256:{digest}", datatype=RL + "contentDigest")
    return _text(text)


def default_run_id(record) -> str:
    basis = f"{record.path}|{record.started_at.isoformat()}|{record.env_id}"
    return hashlib.sha256(basis.encode("utf-8")).hexdigest()[:12]


def export_retrospective(record, repo_ref: str = "local", run_id: Optional[str] = None) -> ProvenanceGraph:
    """What actually ran: activities linked to plan steps, with outcomes.

    One activity node per executed cell; the run node itself is a custom
    class (not a provenance activity) so activity cardinality equals the
    executed cell count.
    """
    g = ProvenanceGraph()
    rid = run_id or default_run_id(record)
    run = run_iri(repo_ref, record.path, rid)
    plan = notebook_iri(repo_ref, record.path)
    g.add(run, RDF + "type", Iri(RL + "Run"))
    g.add(run, RL + "ofPlan", Iri(plan))
    g.add(run, RL + "path", _text(record.path))
    g.add(run, RL + "terminalStatus", _text(record.terminal_status.kind.value))
    if record.terminal_status.reason:
        g.add(run, RL + "terminalReason", _text(record.terminal_status.reason))
    if record.terminal_status.cell_index is not None:
        g.add(run, RL + "terminalCellIndex", _integer(record.terminal_status.cell_index))
    g.add(run, PROV + "startedAtTime", _datetime(record.started_at))
    g.add(run, PROV + "endedAtTime", _datetime(record.ended_at))

    if record.env_id:
        env = f"urn:repro-lens:env:{_segment(record.env_id)}"
        g.add(env, RDF + "type", Iri(PROV + "Entity"))
        g.add(env, RDF + "type", Iri(RL + "Environment"))
        g.add(env, RL + "envId", _text(record.env_id))
        if record.interpreter_version_used:
            g.add(env, RL + "interpreterVersion", _text(record.interpreter_version_used))
        g.add(run, PROV + "used", Iri(env))

    for cell_index, result in record.cell_records:
        act = activity_iri(repo_ref, record.path, cell_index, rid)
        step = step_iri(repo_ref, record.path, cell_index)
        g.add(act, RDF + "type", Iri(PROV + "Activity"))
        g.add(act, RL + "executesStep", Iri(step))
        g.add(act, RL + "withinRun", Iri(run))
        g.add(act, RL + "cellIndex", _integer(cell_index))
        g.add(act, RL + "status", _text(result.status.value))
        g.add(act, PROV + "startedAtTime", _datetime(result.started_at))
        g.add(act, PROV + "endedAtTime", _datetime(result.ended_at))
        g.add(act, RL + "durationMillis", _integer(result.duration_ms))
        if result.execution_count is not None:
            g.add(act, RL + "executionCount", _integer(result.execution_count))
        for position, normalized in enumerate(normalize_outputs(result.outputs)):
            out_node = f"{act}:out:{position}"
            g.add(out_node, RDF + "type", Iri(PROV + "Entity"))
            g.add(out_node, RL + "outputKind", _text(normalized.kind.value))
            g.add(out_node, RL + "position", _integer(position))
            if normalized.kind is OutputKind.STREAM:
                g.add(out_node, RL + "streamName", _text(normalized.stream_name or ""))
            g.add(out_node, RL + "payload", _output_payload_literal(normalized))
            g.add(act, PROV + "generated", Iri(out_node))
    return g


def export_repository(report, records_graphs: Iterable[ProvenanceGraph]) -> ProvenanceGraph:
    """Repo-level graph: a repository node plus all per-notebook triples."""
    g = ProvenanceGraph()
    repo = f"urn:repro-lens:{_segment(report.ref)}"
    g.add(repo, RDF + "type", Iri(RL + "Repository"))
    g.add(repo, RL + "url", _text(report.url))
    g.add(repo, RL + "ref", _text(report.ref))
    for sub in records_graphs:
        g.merge(sub)
    return g


# --- Turtle serialization ----------------------------------------------------

_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _escape_literal(text: str) -> str:
    out: list[str] = []
    for char in text:
        if char in _ESCAPES:
            out.append(_ESCAPES[char])
        elif ord(char) < 0x20:
            out.append(f"\\u{ord(char):04X}")
        else:
            out.append(char)
    return "".join(out)


_PN_LOCAL_SAFE = None


def _prefixed(iri: str, namespaces: dict[str, str]) -> Optional[str]:
    global _PN_LOCAL_SAFE
    if _PN_LOCAL_SAFE is None:
        import re

        _PN_LOCAL_SAFE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
    for prefix, namespace in namespaces.items():
        if iri.startswith(namespace):
            local = iri[len(namespace):]
            if _PN_LOCAL_SAFE.match(local):
                return f"{prefix}:{local}"
    return None


def _render_iri(iri: str, namespaces: dict[str, str]) -> str:
    name = _prefixed(iri, namespaces)
    return name if name is not None else f"<{iri}>"


def _render_term(term: Term, namespaces: dict[str, str]) -> str:
    if isinstance(term, Iri):
        return _render_iri(term.value, namespaces)
    rendered = f'"{_escape_literal(term.lexical)}"'
    if term.lang:
        return f"{rendered}@{term.lang}"
    if term.datatype:
        return f"{rendered}^^{_render_iri(term.datatype, namespaces)}"
    return rendered


def _term_sort_key(term: Term) -> tuple:
    if isinstance(term, Iri):
        return (0, term.value, "", "")
    return (1, term.lexical, term.datatype or "", term.lang or "")


def serialize_turtle(g: ProvenanceGraph) -> str:
    """Valid Turtle 1.1; deterministic ordering; lossless for the triple set."""
    lines = [f"@prefix {prefix}: <{namespace}> ." for prefix, namespace in sorted(g.namespaces.items())]
    lines.append("")
    by_subject: dict[str, list[tuple[str, Term]]] = {}
    for s, p, o in g.triples:
        by_subject.setdefault(s, []).append((p, o))
    for subject in sorted(by_subject):
        pairs = sorted(by_subject[subject], key=lambda po: (po[0], _term_sort_key(po[1])))
        subject_str = _render_iri(subject, g.namespaces)
        body = " ;\n".join(
            f"    {_render_iri(p, g.namespaces)} {_render_term(o, g.namespaces)}" for p, o in pairs
        )
        lines.append(f"{subject_str}\n{body} .")
        lines.append("")
    return "\n".join(lines)
