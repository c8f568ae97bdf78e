"""Exception hierarchy shared across the package."""


class EqPropError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EqPropError, ValueError):
    """Array shapes are inconsistent with the network topology."""


class NumericError(EqPropError, ArithmeticError):
    """A computation produced or received non-finite values."""


class RelaxationError(EqPropError, RuntimeError):
    """A relaxation failed to reach the requested residual tolerance.

    Carries the final residual so callers can report how far off it was.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundaryError(EqPropError, ValueError):
    """A fixed point touches the state box boundary where smoothness is required."""


class ConfigError(EqPropError, ValueError):
    """Invalid configuration file, flag, or hyperparameter combination."""


class DataError(EqPropError, ValueError):
    """Dataset contents violate the expected format (bad label, bad pixel range)."""


class FormatError(EqPropError, ValueError):
    """A binary container (IDX file, checkpoint) has a bad magic, version, or length."""
