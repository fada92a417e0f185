"""Exception taxonomy shared across the toolkit.

Every error raised on a contract violation derives from ``InOutError`` so
callers (and the CLI) can map domain failures to a single exit path.
"""


class InOutError(Exception):
    """Base class for all toolkit errors."""


class IngestError(InOutError):
    """Dataset discovery, decoding, or layout problems."""


class ValidationError(InOutError):
    """A value violates a declared invariant (counts, parity, ranges)."""


class ConfigurationError(InOutError):
    """A configuration is internally inconsistent or unusable."""


class MaskGenerationError(InOutError):
    """Coverage retries exhausted while sampling a noise mask."""


class MergeError(InOutError):
    """Adapter and base weights do not line up."""


class AdapterLoadError(InOutError):
    """An adapter archive is unreadable, truncated, or from an unknown format version."""


class BackendError(InOutError):
    """A diffusion backend is unavailable or failed."""


class TrainingError(InOutError):
    """Training diverged or hit a non-finite loss."""


class UndefinedMetricError(InOutError):
    """A metric is undefined for the given inputs (e.g. no positives)."""


class ExperimentError(InOutError):
    """A grid stage failed; message names the stage and seed."""
