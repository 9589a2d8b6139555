"""Exception hierarchy.

Errors split into two families so the command line can map them onto exit
codes: :class:`ValidationError` (bad input or configuration, exit 2) and
:class:`NumericalError` (a computation left its domain, exit 3).
"""


class CovFourierError(Exception):
    """Base class for all package errors."""


class ValidationError(CovFourierError, ValueError):
    """Invalid input, parameters or configuration."""


class NumericalError(CovFourierError, ArithmeticError):
    """A numerical routine failed or left its domain of validity."""


# validation family
class NonSymmetricError(ValidationError):
    pass


class NotPSDError(ValidationError):
    pass


class InvalidParamsError(ValidationError):
    pass


class ModeCountTooLargeError(ValidationError):
    pass


class InvalidRateError(ValidationError):
    pass


class UnsupportedError(ValidationError):
    pass


class BlockTooSmallError(ValidationError):
    pass


class TooFewPointsError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class EmptyPathError(ValidationError):
    pass


class DegenerateAlphaError(ValidationError):
    pass


class NotEquidistantError(ValidationError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NonFiniteError(ValidationError):
    pass


class EmptyFileError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


# numerical family
class DegenerateStepError(NumericalError):
    pass


class OutOfDomainError(NumericalError):
    pass


class ImaginaryResidueError(NumericalError):
    pass


class NoConvergenceError(NumericalError):
    pass


class NegativeDiagonalError(NumericalError):
    pass


class SolverFailureError(NumericalError):
    pass
