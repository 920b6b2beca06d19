"""Exception types raised by betaspec."""


class DomainError(ValueError):
    """An argument lies outside the domain of a mathematical function."""


class SolverError(ArithmeticError):
    """An iterative solver failed to reach its accuracy contract."""


class QuadratureError(ArithmeticError):
    """Numerical integration did not converge to the requested accuracy."""
