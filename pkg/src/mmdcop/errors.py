"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter or point lies outside the domain where it is defined."""


class UnsupportedFamilyError(ValueError):
    """The requested operation is not available for this copula family."""


class EstimationError(RuntimeError):
    """An estimator could not produce a finite estimate."""


class ConvergenceError(EstimationError):
    """Stochastic gradient descent produced a non-finite step.

    The ``trajectory`` attribute holds the ``(iteration, parameter)`` pairs
    visited before the failure.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = list(trajectory or [])
