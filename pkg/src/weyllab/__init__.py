"""weyllab: desk-scale spectral geometry and geodesic-dynamics laboratory."""

__version__ = "0.1.0"

from .errors import (AuditFailure, ConfigError, CoverFailure,
                     DegenerateInput, DomainError, IncompleteInput,
                     IncompleteSpectrum, InvariantViolation,
                     QuadratureFailure, SolverFailure, StepFailure,
                     WeylLabError, WindowTooSmall)

__all__ = [
    "__version__",
    "AuditFailure", "ConfigError", "CoverFailure", "DegenerateInput",
    "DomainError", "IncompleteInput", "IncompleteSpectrum",
    "InvariantViolation", "QuadratureFailure", "SolverFailure",
    "StepFailure", "WeylLabError", "WindowTooSmall",
]
