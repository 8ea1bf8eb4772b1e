"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RecDigitsError(Exception):
    """Base class for all library errors."""

    code = "Error"


class AssumptionViolation(RecDigitsError, ValueError):
    """The polynomial data fails one of the standing hypotheses."""


class NotMonic(AssumptionViolation):
    code = "NotMonic"


class ConstantPolynomial(AssumptionViolation):
    code = "ConstantPolynomial"


class ZeroConstantTerm(AssumptionViolation):
    code = "ZeroConstantTerm"


class MultipleRoots(AssumptionViolation):
    code = "MultipleRoots"


class UnitCircleRoot(AssumptionViolation):
    code = "UnitCircleRoot"


class AmbiguousRealness(AssumptionViolation):
    code = "AmbiguousRealness"


class PrecisionExhausted(RecDigitsError, ArithmeticError):
    code = "PrecisionExhausted"


class UndecidableRounding(RecDigitsError, ArithmeticError):
    """A value sits too close to a half-integer to decide its rounding."""

    code = "UndecidableRounding"

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DigitOutOfRange(RecDigitsError, ValueError):
    code = "DigitOutOfRange"


class GapTooCoarse(RecDigitsError, ValueError):
    code = "GapTooCoarse"


class SeedRejected(RecDigitsError):
    code = "SeedRejected"


class HorizonExceeded(RecDigitsError):
    code = "HorizonExceeded"


class LengthBeyondStages(RecDigitsError, ValueError):
    code = "LengthBeyondStages"
