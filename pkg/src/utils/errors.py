"""Exception hierarchy for the CACRL scheduler."""

from __future__ import annotations

from typing import Any, Optional


class CACRLError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CACRLError, ValueError):
    """Invalid channel, scenario or experiment configuration."""


class ShapeError(CACRLError, ValueError):
    """Parameter vector or input does not match a layer-shape descriptor."""


class NumericalError(CACRLError, ArithmeticError):
    """Singular linear system, nonfinite value or nonpositive variance."""


class ConvergenceError(CACRLError, RuntimeError):
    """An iterative solver ran out of iterations before meeting its tolerance."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class MissingNoiseRecordError(CACRLError, KeyError):
    """A pathwise encoder gradient was requested for a tuple without its ξ draw."""


class CheckpointError(CACRLError, IOError):
    """Checkpoint header or checksum does not match its payload."""


class ExperimentAborted(CACRLError):
    """A run stopped on a module error; the partial metrics log was flushed."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"experiment aborted at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
