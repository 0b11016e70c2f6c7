"""Exception hierarchy shared by all modules."""


class SlepianQNSError(Exception):
    """Base class for all package errors."""


class ValidationError(SlepianQNSError, ValueError):
    """Bad user input (parameters, configuration)."""


class NumericalError(SlepianQNSError, ArithmeticError):
    """A computation could not be carried out reliably."""


class InvalidParams(ValidationError):
    pass


class OrderMissing(ValidationError, KeyError):
    pass


class AmplitudeCap(ValidationError):
    pass


class InvalidN(ValidationError):
    pass


class Overlap(ValidationError):
    pass


# the CPMG Fourier model raises the same condition under its own name
PulseOverlap = Overlap


class ScalingTooLarge(ValidationError):
    pass


class GridEmpty(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class EmptyComb(ValidationError):
    pass


class ProbabilityRange(NumericalError):
    pass


class DegenerateBand(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class ConfigError(ValidationError):
    """Configuration file problem; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
