"""Exception types shared across the package."""

from __future__ import annotations


class HistBayesError(Exception):
    """Base class for all errors raised by histbayes."""


class SchemaError(HistBayesError):
    """Workspace document has missing/extra fields or wrong value types."""


class ValidationError(HistBayesError):
    """Workspace content violates a model invariant.

    Carries the full finding list; the message shows the first offender
    with its JSON path.
    """

    def __init__(self, findings):
        self.findings = list(findings)
        first = self.findings[0]
        extra = f" (+{len(self.findings) - 1} more)" if len(self.findings) > 1 else ""
        super().__init__(f"{first.path}: {first.message}{extra}")


class DimensionError(HistBayesError):
    """Vector length does not match the model's parameter or bin count."""


class DomainError(HistBayesError):
    """Value outside the mathematical domain of an operation."""


class MissingPriorError(HistBayesError):
    """A free parameter has no ur-prior configured."""


class ImproperPriorError(HistBayesError):
    """Prior set cannot be sampled from (non-finite or degenerate)."""


class InitializationError(HistBayesError):
    """Sampler starting point has zero posterior density."""


class NonFiniteGradientError(HistBayesError):
    """Gradient at the sampler starting point is not finite."""


class DivergenceSignal(HistBayesError):
    """A leapfrog trajectory broke down (energy error above threshold or
    non-finite gradient). Samplers catch this and reject the draw."""

    def __init__(self, message, delta_h=float("inf")):
        super().__init__(message)
        self.delta_h = delta_h


class InsufficientDataError(HistBayesError):
    """Chain too short for the requested diagnostic."""


class NoFiniteThinningError(HistBayesError):
    """No thinning factor within the allowed range tames the autocorrelation."""


class ShapeError(HistBayesError):
    """Chains passed to a multi-chain diagnostic have incompatible shapes."""


class EmptyChainError(HistBayesError):
    """Predictive sampling requires at least one posterior draw."""


class CalibrationError(HistBayesError):
    """Too many pseudo-experiments failed to sample."""
