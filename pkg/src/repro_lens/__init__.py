"""repro-lens: reproducibility analysis for repositories of computational notebooks.

Re-executes every notebook in a repository under a reconstructed
environment, diffs reproduced outputs against the stored originals,
classifies outcomes, exports execution provenance as RDF, and serves the
results over HTTP to an interactive dashboard.
"""

from .analytics import (
    DashboardSummary,
    ExceptionKind,
    Outcome,
    OutcomeCategory,
    aggregate,
    classify_run,
    compute_structure_metrics,
    extract_imports,
)
from .diffing import (
    CellDiff,
    CellVerdict,
    NotebookDiff,
    NotebookVerdict,
    diff_cell,
    diff_notebook,
    normalize_outputs,
)
from .environment import (
    EnvironmentHandle,
    EnvironmentManager,
    EnvironmentPlan,
    InterpreterUnavailable,
    ProvisionFailed,
    plan_environment,
)
from .ingest import (
    ManifestKind,
    ManifestRef,
    RepositorySnapshot,
    discover_environment,
    fetch_repository,
    scan_notebooks,
)
from .notebook import (
    Cell,
    CellKind,
    KernelSpecInfo,
    MalformedJson,
    Notebook,
    Output,
    OutputKind,
    SchemaViolation,
    UnsupportedFormat,
    ValidityReport,
    parse_notebook,
    serialize_notebook,
    validate,
)
from .orchestrator import (
    NotebookRunRecord,
    ProgressEvents,
    RepoRunReport,
    RunConfig,
    RunOrchestrator,
    TerminalKind,
    TerminalStatus,
)
from .provenance import (
    ProvenanceGraph,
    export_prospective,
    export_repository,
    export_retrospective,
    serialize_turtle,
)

__version__ = "0.1.0"
