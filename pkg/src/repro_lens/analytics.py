"""Outcome classification, structural metrics, import statistics, aggregation.

All functions here are pure; the aggregate feeds the dashboard summary and
the exported report document.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .diffing import NotebookDiff, NotebookVerdict
from .notebook import CellKind, Notebook, ValidityReport


class OutcomeCategory(Enum):
    NOT_EXECUTED = "not_executed"
    EXCEPTION = "exception"
    SAME_RESULTS = "same_results"
    DIFFERENT_RESULTS = "different_results"


class ExceptionKind(Enum):
    IMPORT_ERROR = "ImportError"
    MODULE_NOT_FOUND_ERROR = "ModuleNotFoundError"
    FILE_NOT_FOUND_ERROR = "FileNotFoundError"
    IO_ERROR = "IOError"
    SYNTAX_ERROR = "SyntaxError"
    TIMEOUT = "Timeout"
    OTHER = "Other"


@dataclass(frozen=True)
class Outcome:
    category: OutcomeCategory
    exception_kind: Optional[ExceptionKind] = None
    # the raw ename for Other(...), or the NotExecuted reason
    detail: Optional[str] = None


_LISTED_ENAMES = {
    "ImportError": ExceptionKind.IMPORT_ERROR,
    "ModuleNotFoundError": ExceptionKind.MODULE_NOT_FOUND_ERROR,
    "FileNotFoundError": ExceptionKind.FILE_NOT_FOUND_ERROR,
    "IOError": ExceptionKind.IO_ERROR,
    "SyntaxError": ExceptionKind.SYNTAX_ERROR,
}


def exception_kind_for_ename(ename: str) -> tuple[ExceptionKind, Optional[str]]:
    """Exact-match taxonomy; unlisted enames map to Other(ename)."""
    kind = _LISTED_ENAMES.get(ename)
    if kind is not None:
        return kind, None
    return ExceptionKind.OTHER, ename


def classify_run(validity: ValidityReport, record, diff: Optional[NotebookDiff]) -> Outcome:
    """Map one notebook's run evidence to its reproducibility outcome.

    ``diff`` must be present exactly when the record completed.
    """
    from .orchestrator import TerminalKind
    from .notebook import OutputKind

    status = record.terminal_status
    if status.kind is TerminalKind.NOT_EXECUTED:
        return Outcome(OutcomeCategory.NOT_EXECUTED, detail=status.reason)
    if status.kind is TerminalKind.TIMED_OUT:
        return Outcome(OutcomeCategory.EXCEPTION, exception_kind=ExceptionKind.TIMEOUT)
    if status.kind is TerminalKind.HALTED_ON_ERROR:
        ename = ""
        for idx, result in record.cell_records:
            if idx == status.cell_index and result.outputs:
                final = result.outputs[-1]
                if final.kind is OutputKind.ERROR:
                    ename = final.ename or ""
        kind, detail = exception_kind_for_ename(ename)
        return Outcome(OutcomeCategory.EXCEPTION, exception_kind=kind, detail=detail)
    if diff is None or diff.overall is NotebookVerdict.NOT_COMPARABLE:
        return Outcome(OutcomeCategory.NOT_EXECUTED, detail="diff not comparable")
    if diff.overall is NotebookVerdict.SAME_RESULTS:
        return Outcome(OutcomeCategory.SAME_RESULTS)
    return Outcome(OutcomeCategory.DIFFERENT_RESULTS)


# --- import extraction -------------------------------------------------------

_IMPORT_LINE = re.compile(r"^\s*import\s+(.+)$")
_FROM_LINE = re.compile(r"^\s*from\s+([.\w]+)\s+import\b")
_DOTTED_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


def _strip_strings_and_comments(source: str) -> list[str]:
    """Blank out string-literal content and comments, preserving line structure.

    A small line-level tokenizer: tracks single/double/triple-quote state
    across lines, honours backslash escapes, and cuts each line at an
    unquoted ``#``. String bodies are replaced with spaces so column
    positions stay roughly stable.
    """
    lines_out: list[str] = []
    quote: Optional[str] = None  # current delimiter: ' " ''' or three-double
    for line in source.split("\n"):
        out: list[str] = []
        i = 0
        n = len(line)
        while i < n:
            ch = line[i]
            if quote is not None:
                if ch == "\\" and i + 1 < n:
                    out.append("  ")
                    i += 2
                    continue
                if line.startswith(quote, i):
                    out.append(quote)
                    i += len(quote)
                    quote = None
                    continue
                out.append(" ")
                i += 1
                continue
            if ch == "#":
                break
            if ch in ("'", '"'):
                triple = line[i : i + 3]
                if triple in ("'''", '"""'):
                    quote = triple
                    out.append(triple)
                    i += 3
                else:
                    quote = ch
                    out.append(ch)
                    i += 1
                continue
            out.append(ch)
            i += 1
        lines_out.append("".join(out))
        if quote in ("'", '"'):
            # an unterminated single-line string does not span lines
            quote = None
    return lines_out


def _top_segment(dotted: str) -> Optional[str]:
    if not _DOTTED_NAME.match(dotted):
        return None
    return dotted.split(".", 1)[0]


def extract_imports(nb: Notebook) -> set[str]:
    """Top-level module names imported by the notebook's code cells.

    Recognizes ``import X[.Y] [as Z]`` lists and ``from X[.Y] import ...`` at
    any indentation; text inside comments and string literals is ignored;
    relative imports name no external module and are skipped.
    """
    modules: set[str] = set()
    for cell in nb.cells:
        if cell.kind is not CellKind.CODE:
            continue
        for line in _strip_strings_and_comments(cell.source):
            for stmt in line.split(";"):
                m = _FROM_LINE.match(stmt)
                if m:
                    dotted = m.group(1)
                    if dotted.startswith("."):
                        continue
                    top = _top_segment(dotted)
                    if top:
                        modules.add(top)
                    continue
                m = _IMPORT_LINE.match(stmt)
                if m:
                    for item in m.group(1).split(","):
                        name = item.strip()
                        if not name:
                            continue
                        # "mod.sub as alias" -> "mod.sub"
                        name = re.split(r"\s+as\s+", name)[0].strip()
                        top = _top_segment(name)
                        if top:
                            modules.add(top)
    return modules


# --- structural metrics ------------------------------------------------------


@dataclass(frozen=True)
class StructureMetrics:
    code_cells: int
    markdown_cells: int
    raw_cells: int
    code_cells_with_execution_count: int
    code_cells_with_outputs: int
    # every code cell carries both a stored output and an execution count
    all_code_cells_have_output_and_count: bool
    # stored execution counts form the gap-free ascending sequence 1..n
    execution_counts_ascending: bool


def compute_structure_metrics(nb: Notebook) -> StructureMetrics:
    code = [c for c in nb.cells if c.kind is CellKind.CODE]
    markdown = sum(1 for c in nb.cells if c.kind is CellKind.MARKDOWN)
    raw = sum(1 for c in nb.cells if c.kind is CellKind.RAW)
    with_count = sum(1 for c in code if c.execution_count is not None)
    with_outputs = sum(1 for c in code if c.outputs)
    counts = [c.execution_count for c in code]
    ascending = all(c is not None for c in counts) and list(counts) == list(range(1, len(code) + 1))
    if not code:
        ascending = True  # vacuous
    return StructureMetrics(
        code_cells=len(code),
        markdown_cells=markdown,
        raw_cells=raw,
        code_cells_with_execution_count=with_count,
        code_cells_with_outputs=with_outputs,
        all_code_cells_have_output_and_count=bool(code) and with_count == len(code) and with_outputs == len(code),
        execution_counts_ascending=ascending,
    )


# --- aggregation -------------------------------------------------------------


@dataclass
class DashboardSummary:
    total_notebooks: int = 0
    valid_notebooks: int = 0
    executed_notebooks: int = 0
    completed_notebooks: int = 0
    outcome_counts: dict[str, int] = field(default_factory=dict)
    exception_counts: dict[str, int] = field(default_factory=dict)
    # (language, major.minor or "unknown") -> count
    language_distribution: dict[tuple[str, str], int] = field(default_factory=dict)
    code_cells: int = 0
    markdown_cells: int = 0
    raw_cells: int = 0
    notebooks_with_full_output_and_count: int = 0
    notebooks_with_ascending_counts: int = 0
    # top-level module name -> number of notebooks importing it
    import_frequency: dict[str, int] = field(default_factory=dict)


def _major_minor(version: Optional[str]) -> str:
    if not version:
        return "unknown"
    parts = version.split(".")
    if not parts[0].isdigit():
        return "unknown"
    if len(parts) == 1:
        return parts[0]
    return f"{parts[0]}.{parts[1]}" if parts[1].isdigit() else parts[0]


def aggregate(report, diffs: dict[str, Optional[NotebookDiff]], outcomes: dict[str, Outcome]) -> DashboardSummary:
    """Fold per-notebook evidence into the dashboard summary.

    ``report`` is a run-orchestrator RepoRunReport; ``diffs`` and ``outcomes``
    are keyed by notebook path and must cover every entry of the report.
    """
    from .orchestrator import TerminalKind

    summary = DashboardSummary()
    outcome_counter: Counter[str] = Counter({c.value: 0 for c in OutcomeCategory})
    exception_counter: Counter[str] = Counter()
    language_counter: Counter[tuple[str, str]] = Counter()
    import_counter: Counter[str] = Counter()

    for entry in report.entries:
        summary.total_notebooks += 1
        outcome = outcomes[entry.path]
        outcome_counter[outcome.category.value] += 1
        if outcome.category is OutcomeCategory.EXCEPTION and outcome.exception_kind is not None:
            if outcome.exception_kind is ExceptionKind.OTHER and outcome.detail:
                exception_counter[outcome.detail] += 1
            else:
                exception_counter[outcome.exception_kind.value] += 1
        nb = entry.notebook
        if nb is None:
            continue
        if entry.validity is not None and entry.validity.overall_valid:
            summary.valid_notebooks += 1
        record = entry.record
        if record is not None and record.terminal_status.kind is not TerminalKind.NOT_EXECUTED:
            summary.executed_notebooks += 1
        if record is not None and record.terminal_status.kind is TerminalKind.COMPLETED:
            summary.completed_notebooks += 1
        language_counter[(nb.language_name or "unknown", _major_minor(nb.language_version))] += 1
        metrics = compute_structure_metrics(nb)
        summary.code_cells += metrics.code_cells
        summary.markdown_cells += metrics.markdown_cells
        summary.raw_cells += metrics.raw_cells
        if metrics.all_code_cells_have_output_and_count:
            summary.notebooks_with_full_output_and_count += 1
        if metrics.execution_counts_ascending and metrics.code_cells:
            summary.notebooks_with_ascending_counts += 1
        for module in extract_imports(nb):
            import_counter[module] += 1

    summary.outcome_counts = dict(outcome_counter)
    summary.exception_counts = dict(exception_counter)
    summary.language_distribution = dict(language_counter)
    summary.import_frequency = dict(import_counter)
    return summary


def check_partition(summary: DashboardSummary) -> bool:
    """Outcome categories are exhaustive and mutually exclusive."""
    return sum(summary.outcome_counts.values()) == summary.total_notebooks


def exception_total(summary: DashboardSummary) -> int:
    return sum(summary.exception_counts.values())
