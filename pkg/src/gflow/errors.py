"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
exit-code contract: 1 for I/O and data problems, 2 for configuration
problems, 3 for numeric failures.
"""

from __future__ import annotations


class GflowError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class CloudIOError(GflowError):
    """File missing, unreadable, or not in the declared format."""

    exit_code = 1


class CloudParseError(CloudIOError):
    """Malformed record in a point-cloud file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        if prefix:
            message = f"{prefix}: {message}"
        super().__init__(message)


class ValidationError(GflowError):
    """Input data violates a documented invariant (bad label code, length mismatch...)."""

    exit_code = 1


class ConfigError(GflowError):
    """Invalid or inconsistent configuration values."""

    exit_code = 2


class NumericError(GflowError):
    """Numeric failure: domain violation, degenerate geometry, divergence."""

    exit_code = 3


class OutOfDomainError(NumericError):
    """Point lies outside the domain of the radial compression mapping."""


class DegenerateSurfaceError(NumericError):
    """Not enough non-collinear ground points to build a surface."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, message: str, last_state=None):
        self.last_state = last_state
        super().__init__(message)


class UncoveredPointError(NumericError):
    """A point was asked for a merged label but never received a vote."""
