"""Exception types raised by the library."""


class LowRankError(Exception):
    """Base class for all library errors."""


class DimensionError(LowRankError, ValueError):
    pass


class SingularityError(LowRankError, ArithmeticError):
    """A matrix that must be inverted is numerically singular."""


class OrthonormalityError(LowRankError, ValueError):
    pass


class NotInNeighborhoodError(LowRankError, ValueError):
    """The matrix lies outside the chart domain of the base point."""


class NonFiniteError(LowRankError, ArithmeticError):
    """A NaN or Inf appeared during time integration."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GridMismatchError(LowRankError, ValueError):
    pass


class ConfigError(LowRankError, ValueError):
    pass
