"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3, and studies whose Monte Carlo noise
floor could not be brought below the resolved bias exit with 4.
"""

from __future__ import annotations

__all__ = [
    "RoughWZError",
    "ConfigurationError",
    "RefinementError",
    "UnsupportedLevelError",
    "NumericalError",
    "EmbeddingError",
    "IntegrationFailureError",
    "OracleUnavailableError",
    "InconclusiveStudyError",
]


class RoughWZError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RoughWZError):
    """Invalid parameters, grids, or study configuration."""


class RefinementError(ConfigurationError):
    """A grid that was required to refine another one does not."""


class UnsupportedLevelError(ConfigurationError):
    """Tensor level outside the implemented range (1..3)."""


class NumericalError(RoughWZError):
    """A numerical procedure failed beyond recovery."""


class EmbeddingError(NumericalError):
    """Covariance factorization failed (circulant embedding and Cholesky)."""


class IntegrationFailureError(NumericalError):
    """Step-doubling control could not meet tolerance within the substep cap."""

    def __init__(self, message: str, segment_index: int | None = None):
        super().__init__(message)
        self.segment_index = segment_index


class OracleUnavailableError(RoughWZError):
    """No closed-form reference exists for the requested configuration."""


class InconclusiveStudyError(RoughWZError):
    """Study statistics drowned in Monte Carlo noise under the sample cap."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
