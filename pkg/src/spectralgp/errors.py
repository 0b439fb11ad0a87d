"""Exception hierarchy shared by every spectralgp module."""

from __future__ import annotations


class SpectralGPError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SpectralGPError, ValueError):
    pass


class OrderMismatch(SpectralGPError, ValueError):
    pass


class LabelLengthMismatch(SpectralGPError, ValueError):
    pass


class NotPositiveDefinite(SpectralGPError, ArithmeticError):
    pass


class ConvergenceFailure(SpectralGPError, ArithmeticError):
    pass


class NonFiniteEvaluation(SpectralGPError, ArithmeticError):
    pass


class NonFiniteLoss(SpectralGPError, ArithmeticError):
    """Raised when a training objective stops being finite.

    The partially filled trace is attached as ``trace`` so callers can
    inspect what happened before the blow-up.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class InvalidLambda(SpectralGPError, ValueError):
    pass


class InvalidDelta(SpectralGPError, ValueError):
    pass


class BandOutOfRange(SpectralGPError, ValueError):
    pass


class InfeasibleDimension(SpectralGPError, ValueError):
    pass


class PreconditionViolated(SpectralGPError, ValueError):
    pass


class DegenerateDenominator(SpectralGPError, ArithmeticError):
    pass


class ModeInvalid(SpectralGPError, ValueError):
    pass


class EmptyDataset(SpectralGPError, ValueError):
    pass


class ParseError(SpectralGPError, ValueError):
    """CSV ingestion failure pinned to a 1-based file row (header is row 1) and column."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column
