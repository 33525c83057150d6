"""Exception and warning types raised across the package."""


class SparSinkError(Exception):
    """Base class for every error raised by this package."""


class InputError(SparSinkError, ValueError):
    """Invalid user input (shape, sign, range)."""


class NegativeWeight(InputError):
    pass


class LengthMismatch(InputError):
    pass


class NotNormalized(InputError):
    pass


class AllBlack(InputError):
    pass


class EmptyOutput(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NonPositiveEta(InputError):
    pass


class NonPositiveEpsilon(InputError):
    pass


class DegenerateSupport(InputError):
    pass


class AllZeroKernel(InputError):
    pass


class ThetaOutOfRange(InputError):
    pass


class BudgetTooLarge(InputError):
    pass


class InfiniteCostOnSupport(InputError):
    pass


class EmptyWindow(InputError):
    pass


class ZeroDenominator(SparSinkError, ArithmeticError):
    """A scaling update divided positive mass by a zero kernel product."""


class DegenerateSketch(SparSinkError):
    """The sparse sketch left a row or column carrying mass without entries."""

    def __init__(self, message, empty_rows=(), empty_cols=()):
        super().__init__(message)
        self.empty_rows = tuple(empty_rows)
        self.empty_cols = tuple(empty_cols)


class BaselineFailed(SparSinkError):
    """The dense reference solve of an experiment failed."""


class NotConverged(RuntimeWarning):
    """Emitted when a fixed-point loop stops at ``max_iter``."""
