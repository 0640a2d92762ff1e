"""Exception hierarchy. Each CLI-facing error carries its process exit code."""


class HCMKRError(Exception):
    exit_code = 1


class ConfigError(HCMKRError, ValueError):
    exit_code = 1


class DimensionError(HCMKRError, ValueError):
    exit_code = 1


class DataError(HCMKRError, ValueError):
    exit_code = 2


class ManifoldError(HCMKRError, ArithmeticError):
    """A point or argument falls off the hyperboloid beyond tolerance."""

    exit_code = 3


class NumericalError(HCMKRError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, intermediate=None):
        super().__init__(message)
        self.intermediate = intermediate


class EmptyNeighborhood(HCMKRError, LookupError):
    """Raised when attention is requested over zero neighbors."""


class CheckpointError(HCMKRError):
    exit_code = 2
