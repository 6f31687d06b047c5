"""Adaptive filtering multiple-testing procedures for partial-conjunction
(replicability) hypotheses, with direct baselines and a Monte Carlo lab."""
from .errors import (
    AdaFilterError,
    DimensionMismatch,
    DuplicateIdentifier,
    EmptyColumn,
    InvalidDegreesOfFreedom,
    NoConvergence,
    NoTestableHypotheses,
    OracleSizeExceeded,
    OutOfRangeEntry,
    ParseError,
    ReplicabilityLevelOutOfRange,
    ValidationError,
)
from .pc_core import (
    PCCombinerKind,
    PValueMatrix,
    SortedColumn,
    chi_square_sf,
    pc_pvalue,
    sort_column,
    validate_matrix,
)
from .procedures import (
    CurveTable,
    DecisionResult,
    FilterSelectStats,
    ProcedureKind,
    adafilter_bh,
    adafilter_bh_oracle,
    adafilter_bonferroni,
    adafilter_bonferroni_twostep,
    compute_filter_select,
    curves,
)
from .baselines import (
    AdjustmentKind,
    DirectProcedureSpec,
    bh_stepup,
    direct_adjust,
    pfer_bound,
)
from .simlab import (
    MetricsReport,
    PanelProcedure,
    ProcedureMetrics,
    SimScenario,
    TruthAssignment,
    calibrate_mu,
    default_panel_procedures,
    load_scenarios,
    run_panel,
    sample_pvalues,
    sample_truth,
    write_metrics_tsv,
)

__version__ = "0.1.0"

__all__ = [
    "AdaFilterError",
    "ValidationError",
    "OutOfRangeEntry",
    "EmptyColumn",
    "DimensionMismatch",
    "ReplicabilityLevelOutOfRange",
    "InvalidDegreesOfFreedom",
    "NoTestableHypotheses",
    "OracleSizeExceeded",
    "NoConvergence",
    "ParseError",
    "DuplicateIdentifier",
    "PValueMatrix",
    "SortedColumn",
    "PCCombinerKind",
    "validate_matrix",
    "sort_column",
    "pc_pvalue",
    "chi_square_sf",
    "FilterSelectStats",
    "DecisionResult",
    "CurveTable",
    "ProcedureKind",
    "compute_filter_select",
    "adafilter_bonferroni",
    "adafilter_bonferroni_twostep",
    "adafilter_bh",
    "adafilter_bh_oracle",
    "curves",
    "AdjustmentKind",
    "DirectProcedureSpec",
    "direct_adjust",
    "bh_stepup",
    "pfer_bound",
    "SimScenario",
    "TruthAssignment",
    "PanelProcedure",
    "ProcedureMetrics",
    "MetricsReport",
    "default_panel_procedures",
    "calibrate_mu",
    "sample_truth",
    "sample_pvalues",
    "run_panel",
    "load_scenarios",
    "write_metrics_tsv",
    "__version__",
]
