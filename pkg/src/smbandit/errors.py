"""Exception types raised by the library."""


class SmbError(Exception):
    """Base class for all errors raised here."""


class NotPowerOfTwo(SmbError, ValueError):
    pass


class ArmOutOfRange(SmbError, IndexError):
    pass


class LevelOutOfRange(SmbError, IndexError):
    pass


class InvalidEta(SmbError, ValueError):
    pass


class LossOutOfRange(SmbError, ValueError):
    pass


class DegenerateMass(SmbError, FloatingPointError):
    """The conditioning subtree carries zero probability mass."""


class NumericalUnderflow(SmbError, FloatingPointError):
    pass


class ProtocolError(SmbError, RuntimeError):
    """select/update called out of order."""


class InvalidLipschitz(SmbError, ValueError):
    pass


class WindowLengthMismatch(SmbError, ValueError):
    pass


class IndivisibleHorizon(SmbError, ValueError):
    pass


class UnknownSpec(SmbError, ValueError):
    pass
