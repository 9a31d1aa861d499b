"""Exception hierarchy shared across the package."""
from __future__ import annotations


class LogGrouperError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(LogGrouperError):
    """Malformed input data or invalid record fields."""


class EmptyWindowError(IngestError):
    """A time window selected fewer records than clustering needs."""


class WindowPlacementError(IngestError):
    """Records without a parseable timestamp cannot be placed in a window."""


class VectorizeError(LogGrouperError):
    """Feature extraction failed or produced a degenerate matrix."""


class ProviderError(VectorizeError):
    """An external embedding provider was unreachable or inconsistent."""


class ClusterError(LogGrouperError):
    """Invalid clustering parameters or unusable geometry."""


class QualityError(LogGrouperError):
    """A validity score is undefined for the given assignment."""


class PipelineError(LogGrouperError):
    """A run could not be assembled from its configuration."""


class RunExistsError(PipelineError):
    """An artifact directory for this run id already exists."""


class RunNotFoundError(PipelineError):
    """No artifact directory for the requested run id."""


class CorruptArtifactError(PipelineError):
    """A persisted run artifact is missing or unreadable."""
