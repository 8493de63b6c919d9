"""Exception hierarchy shared by all modules."""


class OneChannelError(Exception):
    """Base class for every error raised by this package."""


class SingularBeta(OneChannelError, ZeroDivisionError):
    """The upper-right entry of a 2x2 block is (numerically) zero."""


class SingularBlock(OneChannelError, ZeroDivisionError):
    """A block that must be inverted is (numerically) singular."""


class NotU11(OneChannelError, ValueError):
    """Matrix does not preserve the form diag(1, -1)."""


class NonUnitaryCoin(OneChannelError, ValueError):
    pass


class NonUnitaryBlock(OneChannelError, ValueError):
    pass


class ShapeMismatch(OneChannelError, ValueError):
    pass


class InvalidSiteChoice(OneChannelError, ValueError):
    pass


class IndexOutOfRange(OneChannelError, IndexError):
    pass


class SingularResolvent(OneChannelError, ArithmeticError):
    pass


class ExceptionalPoint(OneChannelError, ArithmeticError):
    """The transfer matrix is undefined at level ``n`` for spectral parameter ``z``."""

    def __init__(self, n, z=None, message=None):
        self.n = n
        self.z = z
        if message is None:
            where = "structurally" if z is None else f"at z={z!r}"
            message = f"transfer matrix undefined at level {n} {where}"
        super().__init__(message)


class EigensolverFailure(OneChannelError, ArithmeticError):
    pass


class EmptyBandSet(OneChannelError, RuntimeError):
    pass


class NonRealDiscriminant(OneChannelError, ArithmeticError):
    pass


class NearBandEdge(OneChannelError, ValueError):
    pass


class C3Violation(OneChannelError, RuntimeError):
    pass


class ConfigError(OneChannelError, ValueError):
    pass
