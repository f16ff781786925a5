"""Exception hierarchy shared by all deimkit modules."""


class DeimError(Exception):
    """Base class for every error raised by deimkit."""


class ConfigError(DeimError, ValueError):
    """Invalid input shape, option or configuration value."""


class DimensionError(ConfigError):
    """Operand dimensions do not match."""


class NumericalError(DeimError, ArithmeticError):
    """A numerical procedure could not deliver its guaranteed result."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky met a non-positive pivot.

    ``index`` is the 1-based position of the failing pivot.
    """

    def __init__(self, index, msg=None):
        self.index = index
        super().__init__(msg or f"matrix is not positive definite (pivot {index})")


class SingularFactorError(NumericalError):
    """Triangular factor with a zero diagonal entry (``index`` is 1-based)."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"triangular factor is singular: zero diagonal at {index}")


class RankDeficiencyError(NumericalError):
    """Matrix rank is below what the operation requires."""


class ConvergenceError(NumericalError):
    """Iteration exceeded its cap or failed to converge."""


class BreakdownError(NumericalError):
    """Gram-Schmidt produced a (numerically) zero column."""


class BoundViolationError(NumericalError):
    """A certified a-priori error bound was observed to fail."""
