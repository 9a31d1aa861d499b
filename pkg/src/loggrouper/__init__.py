"""Grouping of nightly test-failure logs into reviewable clusters."""
from .cluster import Algorithm, ClusterAssignment
from .ingest import Corpus, LogRecord, Severity, WindowSpec, select_window
from .pipeline import (
    PipelineRun,
    Preprocessing,
    RunConfig,
    RunStatus,
    load_run,
    persist_run,
    run_matrix,
)
from .quality import Combo, QualityReport, QualityScore
from .vectorize import FeatureMatrix, VectorizerTag

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ClusterAssignment",
    "Combo",
    "Corpus",
    "FeatureMatrix",
    "LogRecord",
    "PipelineRun",
    "Preprocessing",
    "QualityReport",
    "QualityScore",
    "RunConfig",
    "RunStatus",
    "Severity",
    "VectorizerTag",
    "WindowSpec",
    "load_run",
    "persist_run",
    "run_matrix",
    "select_window",
    "__version__",
]
