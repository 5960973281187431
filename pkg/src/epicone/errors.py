"""Exception hierarchy shared by all modules."""


class EpiconeError(Exception):
    """Base class for every error raised by the package."""


class DomainError(EpiconeError, ValueError):
    """An argument lies outside the open domain of a function."""


class InvalidExponent(EpiconeError, ValueError):
    pass


class InvalidOrder(EpiconeError, ValueError):
    pass


class ConvergenceFailure(EpiconeError, ArithmeticError):
    pass


class NotInterior(DomainError):
    """A barrier oracle was called at a point outside int(K)."""


class InvalidDirection(EpiconeError, ValueError):
    pass


class SingularHessian(EpiconeError, ArithmeticError):
    pass


class SingularKKT(EpiconeError, ArithmeticError):
    pass


class InvalidProblem(EpiconeError, ValueError):
    pass


class ConfigError(EpiconeError, ValueError):
    pass


class SolverFailure(EpiconeError, RuntimeError):
    """Raised by ``SolveResult.raise_for_status``; carries the result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class IterationLimit(SolverFailure):
    pass


class NumericalFailure(SolverFailure):
    pass
