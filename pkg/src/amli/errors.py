"""Exception types raised across the package."""


class AmliError(Exception):
    """Base class for all package errors."""


class DegenerateIntervalError(AmliError, ValueError):
    """Spectral interval with lambda_min >= lambda_max or a nonpositive endpoint."""


class DegreeError(AmliError, ValueError):
    """Polynomial degree outside the supported range."""


class DimensionMismatchError(AmliError, ValueError):
    pass


class NotSymmetricError(AmliError, ValueError):
    pass


class CholeskyBreakdownError(AmliError, ArithmeticError):
    """Raised when a symmetric factorization meets a nonpositive pivot."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"nonpositive pivot at index {pivot}: matrix is not SPD")


class ZeroDiagonalError(AmliError, ValueError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"zero diagonal entry at row {index}")


class IndefiniteError(AmliError, ArithmeticError):
    """Operator (matrix or preconditioner) found to be indefinite."""


class NegativePolynomialError(AmliError, ValueError):
    """Stabilization polynomial takes negative values on the required interval."""


class InfeasibleTargetError(AmliError, ValueError):
    """Requested condition-number target cannot be reached with the given constants."""


class ConfigError(AmliError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class HierarchyError(AmliError, ValueError):
    """Inconsistent multilevel structure (sizes, splittings, cycle vector)."""
