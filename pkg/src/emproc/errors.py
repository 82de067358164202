"""Exception hierarchy. Each class maps to one CLI exit status."""


class EmprocError(Exception):
    exit_code = 1


class ConfigError(EmprocError, ValueError):
    """Invalid model, grid, weight or experiment configuration."""

    exit_code = 2


class DataError(EmprocError, ValueError):
    """Sample data violates a standing assumption (ties in a column)."""

    exit_code = 3


class NumericalError(EmprocError, ArithmeticError):
    """Quadrature failed to reach its requested tolerance."""

    exit_code = 3

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class InvariantViolation(EmprocError, ValueError):
    """A declared invariant (weight bound, derivative consistency) failed."""

    exit_code = 2
