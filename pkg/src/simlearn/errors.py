"""Exception types shared across the library."""


class SimlearnError(Exception):
    """Base class for library errors."""


class InvalidInputError(SimlearnError, ValueError):
    """An argument is outside its documented domain (non-finite, bad range)."""


class RangeError(SimlearnError, ValueError):
    """A requested value lies outside the range of the activation."""


class BoundaryError(SimlearnError, ValueError):
    """Evaluation at a boundary point where the link diverges."""


class NoConvergenceError(SimlearnError, RuntimeError):
    """An iterative routine exhausted its iteration or bracket budget."""


class DivergenceError(SimlearnError, RuntimeError):
    """Training produced non-finite iterates."""


class PreconditionError(SimlearnError, ValueError):
    """A documented precondition (e.g. minimum sample size) is not met."""


class ConfigError(SimlearnError, ValueError):
    """Malformed configuration or dataset file."""
