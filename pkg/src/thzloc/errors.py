"""Exception hierarchy shared by all thzloc modules."""


class ThzLocError(Exception):
    """Base class for all library errors."""


class DomainError(ThzLocError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateGeometryError(DomainError):
    """Coincident points or otherwise degenerate geometric configuration."""


class ConfigError(ThzLocError, ValueError):
    """Invalid scenario / schedule / profile configuration."""


class NumericalError(ThzLocError, RuntimeError):
    """A numerical procedure produced non-finite or unusable results."""


class UnidentifiableError(NumericalError):
    """Singular Fisher information: requested parameters are not identifiable."""

    def __init__(self, message: str, null_directions=None):
        super().__init__(message)
        self.null_directions = null_directions if null_directions is not None else []


class InsufficientMeasurementsError(ThzLocError, ValueError):
    """Fewer measurements than the geometric minimum for the solver."""
