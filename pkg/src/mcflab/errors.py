"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for bad input,
3 for numerical failure.
"""


class McfError(Exception):
    exit_code = 3


class ValidationError(McfError, ValueError):
    exit_code = 2


class GridMismatchError(ValidationError):
    pass


class TruncationError(ValidationError):
    pass


class StencilError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class NumericalError(McfError, ArithmeticError):
    exit_code = 3


class QuadratureError(NumericalError):
    pass


class RejectedStepError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class BlowUpError(NumericalError):
    def __init__(self, msg, tau=None):
        super().__init__(msg)
        self.tau = tau


class NotYetCylindricalError(NumericalError):
    pass


class NoSolutionError(NumericalError):
    pass


class NonExponentialError(NumericalError):
    pass


class InsufficientDataError(ValidationError):
    pass


class InapplicableError(ValidationError):
    pass


class NoStartPlaneError(NumericalError):
    pass
