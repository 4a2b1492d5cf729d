"""Exception hierarchy shared by every module."""


class AdcsError(ValueError):
    """Base class for all toolkit errors."""


class SizeMismatch(AdcsError):
    pass


class NonFiniteValue(AdcsError):
    pass


class AxisOutOfRange(AdcsError):
    pass


class ParameterOutOfRange(AdcsError):
    pass


class InvalidBound(AdcsError):
    pass


class EmptyHistogram(AdcsError):
    pass


class EmptySample(AdcsError):
    pass


class InvalidParams(AdcsError):
    pass


class CorruptStream(AdcsError):
    pass


class UnknownVersion(AdcsError):
    pass


class ShapeMismatch(AdcsError):
    pass
