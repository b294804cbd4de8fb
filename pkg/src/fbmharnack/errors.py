"""Exception hierarchy shared by all modules."""


class FbmHarnackError(Exception):
    """Base class for errors raised by this package."""


class DomainError(FbmHarnackError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(FbmHarnackError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class NumericalError(FbmHarnackError, ArithmeticError):
    """A computation produced a non-finite value or a factorization failed.

    ``step`` carries the grid index or path index where it happened, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class AccuracyError(NumericalError):
    """A series did not reach the requested tolerance within its term budget."""

    def __init__(self, message, partial_sum=None, terms=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.terms = terms


class ConsistencyError(FbmHarnackError):
    """Two estimators of the same quantity disagree beyond the noise threshold."""
