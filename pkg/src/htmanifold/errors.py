"""Exception hierarchy.

Every error raised deliberately by the package derives from `HTError`, so
callers can catch the whole family at once. Each class also derives from the
closest builtin so generic ``except ValueError`` handlers keep working.
"""


class HTError(Exception):
    """Base class for all package errors."""


class ModeSetError(HTError, ValueError):
    pass


class ShapeError(HTError, ValueError):
    pass


class DimensionError(HTError, ValueError):
    pass


class PartitionError(HTError, ValueError):
    pass


class CapacityError(HTError, MemoryError):
    pass


class RankError(HTError, ValueError):
    pass


class RankDeficiencyError(HTError, ArithmeticError):
    pass


class GaugeError(HTError, ValueError):
    pass


class SkewError(HTError, ValueError):
    pass


class BasePointError(HTError, ValueError):
    pass


class ConditioningError(HTError, ArithmeticError):
    """A Gramian (or Gram matrix) is numerically singular.

    ``node`` carries the offending tree node id when known.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ContractError(HTError, ValueError):
    pass


class SampleIndexError(HTError, IndexError):
    pass


class ParameterError(HTError, ValueError):
    pass


class DegenerateReferenceError(HTError, ZeroDivisionError):
    pass


class LineSearchError(HTError, RuntimeError):
    pass


class SolverError(HTError, RuntimeError):
    pass


class ConfigError(HTError, ValueError):
    """Malformed experiment configuration; ``line``/``column`` are 1-based."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class FormatError(HTError, ValueError):
    """Binary or CSV file does not match the expected layout."""
