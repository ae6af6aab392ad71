"""Exception types shared across the package."""


class GlekitError(Exception):
    """Base class for all package errors."""


class ValidationError(GlekitError, ValueError):
    """Bad user input: malformed config, inconsistent shapes, unknown keys."""


class DimensionMismatchError(ValidationError):
    """A variable index lies outside the operator's variable table."""


class TermBudgetError(GlekitError, RuntimeError):
    """Polynomial term count exceeded the configured cap.

    ``power_reached`` records the highest Liouville power that was completed
    before the budget was exhausted.
    """

    def __init__(self, message: str, power_reached: int):
        super().__init__(message)
        self.power_reached = power_reached


class InvalidDensityError(ValidationError):
    """Non-integrable or otherwise ill-posed 1D density configuration."""


class MissingDensityError(ValidationError):
    """A polynomial variable has no density in the product measure."""


class NumericError(GlekitError, RuntimeError):
    """Numerical failure: non-finite values, singular steps, blow-up."""


class ConditioningError(NumericError):
    """A time-stepping linear solve became ill-conditioned.

    ``node`` records the grid node at which the solve failed.
    """

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node
