"""Exception taxonomy shared by every module."""


class FoaError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FoaError):
    """Bad arguments or configuration (maps to CLI exit code 2)."""


class NumericalError(FoaError):
    """Numerical failure during optimization (maps to CLI exit code 3)."""


class ZeroNormError(ValidationError):
    pass


class ZeroNormRowError(ZeroNormError):
    pass


class NonPositiveTemperatureError(ValidationError):
    pass


class EmptyImageError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class TooFewPointsError(ValidationError):
    pass


class TooLargeError(ValidationError):
    pass


class InvalidDimsError(ValidationError):
    pass


class DegenerateCropError(ValidationError):
    pass


class NonPositiveLossError(ValidationError):
    pass


class MissingPairError(ValidationError):
    pass


class FormatError(ValidationError):
    """Malformed PPM/FOAT/FOAE/CSV input."""


class NumericalUnderflowError(NumericalError):
    """Sinkhorn kernel exp(-C/lambda) underflowed; lambda too small for this cost matrix."""


class NonFiniteLossError(NumericalError):
    """A loss or gradient stopped being finite mid-attack."""
