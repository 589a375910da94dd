"""Exception hierarchy shared by every module."""


class MirrorSpecError(Exception):
    """Base class for all package errors."""


class ParameterError(MirrorSpecError, ValueError):
    """Invalid model or frame parameters."""


class UnsupportedFamilyError(MirrorSpecError, ValueError):
    """Operation not defined for the requested operator family."""


class ResolutionError(MirrorSpecError):
    """Discretization cannot represent the operator at the requested accuracy."""


class NumericError(MirrorSpecError, ArithmeticError):
    """An eigensolver, quadrature or root finder failed."""


class RangeError(MirrorSpecError, ValueError):
    """Spectral functional requested beyond the certified range."""


class FitError(MirrorSpecError):
    """Least-squares design is too ill-conditioned to trust."""
