"""Exception hierarchy shared by every module."""


class ReluForgeError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(ReluForgeError, ValueError):
    """Array shapes do not agree with the network or the operation."""


class InvalidNetwork(ReluForgeError, ValueError):
    """A network fails structural validation."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ChannelViolation(InvalidNetwork):
    """A special network breaks the source/collation channel rules."""


class WidthMismatch(ReluForgeError, ValueError):
    """Special networks of different widths cannot be combined."""


class UnboundedCollation(ReluForgeError, ArithmeticError):
    """A collation shift could not be certified on the requested domain."""


class EmptyIndexSet(ReluForgeError, ValueError):
    pass


class FactorOutOfRange(ReluForgeError, ValueError):
    """Product inputs leave the interval [0, 1]."""


class OutOfDomain(ReluForgeError, ValueError):
    pass


class TooManyKnots(ReluForgeError, ValueError):
    pass


class WrongKnotCount(ReluForgeError, ValueError):
    pass


class NotVanishing(ReluForgeError, ValueError):
    """A spline expected to vanish at the interval ends does not."""


class EmptyGroup(ReluForgeError, ValueError):
    pass


class OracleFailure(ReluForgeError, RuntimeError):
    """A derivative oracle raised or returned a non-finite value."""


class InvalidP(ReluForgeError, ValueError):
    pass


class NonPositiveProbability(ReluForgeError, ValueError):
    pass


class StaleCache(ReluForgeError, RuntimeError):
    """Backpropagation was requested for inputs that were not forwarded."""


class EmptyDataset(ReluForgeError, ValueError):
    pass


class DegenerateFit(ReluForgeError, ValueError):
    pass


class VerificationFailure(ReluForgeError, AssertionError):
    pass
