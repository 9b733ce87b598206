"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
validation problems exit 2, numeric failures exit 3.
"""


class GarmentDiffError(Exception):
    """Base class for all package errors."""


class ShapeError(GarmentDiffError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class GraphError(GarmentDiffError, RuntimeError):
    """Misuse of the autodiff graph (non-scalar loss, reuse after backward...)."""


class NumericError(GarmentDiffError, RuntimeError):
    """NaN/Inf encountered, or a numeric check failed."""


class EmptyContextError(GarmentDiffError, ValueError):
    """Attention called with an empty key/value context."""


class DegenerateInputError(GarmentDiffError, ValueError):
    """Input mathematically unusable (e.g. zero-norm vector in a cosine)."""


class ValidationError(GarmentDiffError, ValueError):
    """Bad file contents, bad config values, mismatched inputs."""


class ConfigError(ValidationError):
    """Unknown or malformed configuration key/value."""


class UsageError(GarmentDiffError, ValueError):
    """Bad command-line invocation."""
