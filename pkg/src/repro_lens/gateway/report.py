"""The published result document (JSON, schema_version 1).

This is the one wire format the dashboard consumes; counts in the summary
always equal re-running the analytics aggregate over the persisted report.
"""

from __future__ import annotations

from datetime import timedelta
from typing import Any, Optional

from ..analytics import DashboardSummary, Outcome, OutcomeCategory, aggregate, classify_run
from ..diffing import CellDiff, NotebookDiff, diff_notebook
from ..notebook import Output, OutputKind
from ..orchestrator import NotebookRunRecord, RepoRunReport, TerminalKind
from .binder import UnsupportedHost, binder_link

SCHEMA_VERSION = 1


def _output_json(output: Output) -> dict[str, Any]:
    if output.kind is OutputKind.STREAM:
        return {"kind": "stream", "name": output.stream_name, "text": output.text}
    if output.kind is OutputKind.ERROR:
        return {"kind": "error", "ename": output.ename, "evalue": output.evalue}
    return {"kind": output.kind.value, "data": dict(output.data or {})}


def _diff_json(diff: Optional[NotebookDiff]) -> Optional[dict[str, Any]]:
    if diff is None:
        return None

    def cell(c: CellDiff) -> dict[str, Any]:
        return {
            "index": c.index,
            "verdict": c.verdict.value,
            "details": [
                {
                    "position": d.position,
                    "original": _output_json(d.original) if d.original is not None else None,
                    "reproduced": _output_json(d.reproduced) if d.reproduced is not None else None,
                }
                for d in c.detail
            ],
        }

    return {
        "overall": diff.overall.value,
        "reason": diff.reason,
        "cells": [cell(c) for c in diff.cells],
    }


def _record_json(record: Optional[NotebookRunRecord]) -> Optional[dict[str, Any]]:
    if record is None:
        return None
    status = record.terminal_status
    return {
        "env_id": record.env_id,
        "interpreter_version_used": record.interpreter_version_used,
        "fidelity_flags": sorted(flag.value for flag in record.fidelity_flags),
        "terminal_status": {
            "kind": status.kind.value,
            "cell_index": status.cell_index,
            "reason": status.reason,
        },
        "started_at": record.started_at.isoformat(),
        "ended_at": record.ended_at.isoformat(),
        "cells": [
            {
                "index": index,
                "status": result.status.value,
                "execution_count": result.execution_count,
                "started_at": result.started_at.isoformat(),
                "ended_at": result.ended_at.isoformat(),
                "duration_ms": result.duration_ms,
                "outputs": [_output_json(o) for o in result.outputs],
            }
            for index, result in record.cell_records
        ],
    }


def _outcome_json(outcome: Outcome) -> dict[str, Any]:
    doc: dict[str, Any] = {"category": outcome.category.value}
    if outcome.exception_kind is not None:
        doc["exception_kind"] = outcome.exception_kind.value
    if outcome.detail is not None:
        doc["detail"] = outcome.detail
    return doc


def summary_json(summary: DashboardSummary) -> dict[str, Any]:
    return {
        "totals": {
            "notebooks": summary.total_notebooks,
            "valid": summary.valid_notebooks,
            "executed": summary.executed_notebooks,
            "completed": summary.completed_notebooks,
        },
        "outcomes": dict(sorted(summary.outcome_counts.items())),
        "exceptions_by_kind": dict(sorted(summary.exception_counts.items())),
        "languages": [
            {"language": language, "version": version, "count": count}
            for (language, version), count in sorted(summary.language_distribution.items())
        ],
        "cells": {
            "code": summary.code_cells,
            "markdown": summary.markdown_cells,
            "raw": summary.raw_cells,
        },
        "notebooks_with_full_output_and_count": summary.notebooks_with_full_output_and_count,
        "notebooks_with_ascending_counts": summary.notebooks_with_ascending_counts,
        "imports": [
            {"module": module, "notebooks": count}
            for module, count in sorted(summary.import_frequency.items(), key=lambda kv: (-kv[1], kv[0]))
        ],
    }


def evaluate_report(report: RepoRunReport) -> tuple[dict[str, Optional[NotebookDiff]], dict[str, Outcome], DashboardSummary]:
    """Derive diffs, outcomes, and the summary for a finished repo run."""
    diffs: dict[str, Optional[NotebookDiff]] = {}
    outcomes: dict[str, Outcome] = {}
    for entry in report.entries:
        record = entry.record
        diff: Optional[NotebookDiff] = None
        if (
            entry.notebook is not None
            and record is not None
            and record.terminal_status.kind is TerminalKind.COMPLETED
        ):
            diff = diff_notebook(entry.notebook, record)
        diffs[entry.path] = diff
        if entry.validity is not None and record is not None:
            outcomes[entry.path] = classify_run(entry.validity, record, diff)
        else:
            reason = entry.parse_error or "not parsed"
            outcomes[entry.path] = Outcome(OutcomeCategory.NOT_EXECUTED, detail=f"parse error: {reason}")
    summary = aggregate(report, diffs, outcomes)
    return diffs, outcomes, summary


def build_report_document(report: RepoRunReport) -> dict[str, Any]:
    """The full schema_version-1 result document for one repository run."""
    from ..analytics import compute_structure_metrics, extract_imports

    diffs, outcomes, summary = evaluate_report(report)
    notebooks: list[dict[str, Any]] = []
    for index, entry in enumerate(report.entries):
        nb = entry.notebook
        try:
            binder = binder_link(report.url, report.ref, entry.path)
        except UnsupportedHost:
            binder = None
        structure = None
        imports: list[str] = []
        language = None
        if nb is not None:
            metrics = compute_structure_metrics(nb)
            structure = {
                "code_cells": metrics.code_cells,
                "markdown_cells": metrics.markdown_cells,
                "raw_cells": metrics.raw_cells,
                "code_cells_with_execution_count": metrics.code_cells_with_execution_count,
                "code_cells_with_outputs": metrics.code_cells_with_outputs,
                "all_code_cells_have_output_and_count": metrics.all_code_cells_have_output_and_count,
                "execution_counts_ascending": metrics.execution_counts_ascending,
            }
            imports = sorted(extract_imports(nb))
            language = {"name": nb.language_name, "version": nb.language_version}
        notebooks.append(
            {
                "index": index,
                "path": entry.path,
                "parse_error": entry.parse_error,
                "validity": None
                if entry.validity is None
                else {
                    "has_valid_format": entry.validity.has_valid_format,
                    "has_kernel_spec": entry.validity.has_kernel_spec,
                    "has_language_version": entry.validity.has_language_version,
                    "overall_valid": entry.validity.overall_valid,
                },
                "language": language,
                "outcome": _outcome_json(outcomes[entry.path]),
                "record": _record_json(entry.record),
                "diff": _diff_json(diffs[entry.path]),
                "structure": structure,
                "imports": imports,
                "binder_url": binder,
                "prov_ttl": f"notebooks/{index}/prov.ttl",
            }
        )
    duration_ms = (report.ended_at - report.started_at) // timedelta(milliseconds=1)
    return {
        "schema_version": SCHEMA_VERSION,
        "job": {
            "url": report.url,
            "ref": report.ref,
            "started_at": report.started_at.isoformat(),
            "ended_at": report.ended_at.isoformat(),
            "duration_ms": duration_ms,
        },
        "summary": summary_json(summary),
        "notebooks": notebooks,
    }
