"""Exception hierarchy for the estimation toolkit."""


class EstimationError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(EstimationError):
    """Raised when matrix or vector dimensions are inconsistent."""


class NotPositiveDefiniteError(EstimationError):
    """Raised when a weighting matrix fails its Cholesky factorization.

    The offending matrix is identified by ``name``.
    """

    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"matrix {name!r} is not symmetric positive definite")


class ConditioningError(EstimationError):
    """Raised when a factorization or eigensolve fails numerically."""


class UnknownSubsystemError(EstimationError):
    """Raised when a subsystem id is not part of the partition."""

    def __init__(self, index, known):
        self.index = index
        super().__init__(f"unknown subsystem id {index!r}; known ids: {sorted(known)}")


class EmptyBoxError(EstimationError):
    """Raised when a box constraint has a lower bound above its upper bound."""


class ConvergenceError(EstimationError):
    """Raised when an iterative solver hits its iteration cap.

    Carries the last iterate displacement in ``residual`` and the number of
    iterations performed in ``iterations``.
    """

    def __init__(self, message, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")


class ProtocolError(EstimationError):
    """Raised when the iterate-exchange protocol is violated."""


class ConfigError(EstimationError):
    """Raised for invalid run configurations or model files."""
