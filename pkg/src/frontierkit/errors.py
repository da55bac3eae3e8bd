"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, exit code 2
from the CLI) and ``ConvergenceError`` (an estimator or solver gave up, exit
code 3).
"""


class FrontierError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(FrontierError, ValueError):
    pass


class ConvergenceError(FrontierError, RuntimeError):
    pass


# panel loading
class SchemaMismatch(ValidationError):
    pass


class UnbalancedPanel(ValidationError):
    pass


class NonPositiveQuantity(ValidationError):
    pass


class DuplicateRow(ValidationError):
    pass


class UnknownVariable(ValidationError, KeyError):
    def __str__(self):  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class ZeroVariance(ValidationError):
    pass


class MissingIndexYear(ValidationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DivisionByZero(ValidationError, ZeroDivisionError):
    pass


# estimation
class DegenerateDesign(ValidationError):
    pass


class CovariateMismatch(ValidationError):
    pass


class InsufficientInteriorScores(ValidationError):
    pass


class PreconditionError(ValidationError):
    pass


class CensoringDegeneracy(ValidationError):
    """Every observation sits at the same censoring limit."""


class NonConvergence(ConvergenceError):
    pass


class SolverFailure(ConvergenceError):
    def __init__(self, message, status=None, cells=None):
        super().__init__(message)
        self.status = status
        self.cells = cells or []


class BootstrapDegenerate(ConvergenceError):
    pass


class RejectionStall(ConvergenceError):
    pass


class NonFinite(ConvergenceError, FloatingPointError):
    pass
