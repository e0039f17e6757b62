"""Exception and warning types shared across the package."""


class OtfsError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(OtfsError, ValueError):
    """A caller-supplied argument violates an operation's preconditions."""


class DataError(OtfsError, ValueError):
    """The data itself cannot support the requested computation."""


class ConvergenceWarning(UserWarning):
    """An iterative solver hit its iteration cap before meeting tolerance."""
