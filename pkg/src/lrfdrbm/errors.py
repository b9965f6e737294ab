"""Exception hierarchy.

Each error class carries the CLI exit code it maps to, so the driver can
translate failures without a lookup table.
"""


class LrfdError(Exception):
    exit_code = 1


class ConfigError(LrfdError, ValueError):
    """Bad preset, profile, or parameter file."""

    exit_code = 2


class CapacityError(LrfdError):
    """Requested system size exceeds what exact enumeration can hold."""

    exit_code = 3


class NumericalError(LrfdError, ArithmeticError):
    exit_code = 4


class DivergenceError(NumericalError):
    """A series required to converge does not (e.g. delta_P <= 1)."""


class DomainError(NumericalError):
    """A bound was requested outside its range of validity.

    ``min_nh`` holds the smallest admissible hidden-node count when known.
    """

    def __init__(self, message, min_nh=None):
        super().__init__(message)
        self.min_nh = min_nh


class NormalizationError(NumericalError):
    """A state with zero norm cannot be normalized."""


class AmplitudeZeroError(NumericalError, ZeroDivisionError):
    """Division by an amplitude that vanishes exactly."""


class SamplingError(NumericalError):
    """Monte Carlo chain reached a zero-amplitude configuration."""


class ConditioningError(NumericalError):
    """Regularized SR matrix is singular; ``spectrum`` holds its eigenvalues."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum
