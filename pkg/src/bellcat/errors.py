"""Exception hierarchy shared by all bellcat modules."""


class BellcatError(Exception):
    """Base class for every error raised by bellcat."""


class LabelCollision(BellcatError, ValueError):
    pass


class UnknownLabel(BellcatError, KeyError):
    pass


class InvalidPermutation(BellcatError, ValueError):
    pass


class NumericalInconsistency(BellcatError, ArithmeticError):
    pass


class TooLargeToMaterialize(BellcatError, MemoryError):
    """A dense matrix would exceed the configured dimension cap."""


class DimensionError(BellcatError, ValueError):
    pass


class PartitionError(BellcatError, ValueError):
    """Labels do not split cleanly between the two parties."""


class ShapeError(BellcatError, ValueError):
    pass


class TooLargeToEnumerate(BellcatError, ValueError):
    pass


class RegisterError(BellcatError, ValueError):
    pass


class InvalidPOVM(BellcatError, ValueError):
    pass


class ParseError(BellcatError, ValueError):
    """Malformed CLI spec or JSON document; the message names the location."""
