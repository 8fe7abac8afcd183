"""Exception hierarchy shared by every module of the package."""


class PDMPError(Exception):
    """Base class for all domain errors raised by pdmpjump."""


class ParameterOutOfRange(PDMPError, ValueError):
    pass


class Unreachable(PDMPError, ValueError):
    """The target state cannot be reached by flowing forward from the start."""


class SeriesDiverged(PDMPError, ArithmeticError):
    pass


class QuadratureFailure(PDMPError, ArithmeticError):
    pass


class DegenerateDenominator(PDMPError, ArithmeticError):
    pass


class HazardExhausted(PDMPError, RuntimeError):
    """The cumulative hazard never reaches the requested level: no jump occurs.

    ``index`` holds the jump number when raised from inside a simulation.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DenominatorZero(PDMPError, ArithmeticError):
    pass


class DegenerateCriterion(PDMPError, ArithmeticError):
    pass


class EmptySample(PDMPError, ValueError):
    pass


class OutsideProjectionInterval(PDMPError, ValueError):
    pass


class NegativeNumerator(PDMPError, ArithmeticError):
    pass


class CoverageGap(PDMPError, ValueError):
    pass


class ParseError(PDMPError, ValueError):
    pass


class NonMonotoneTime(ParseError):
    pass


class NonPositiveSize(ParseError):
    pass


class SegmentTooShort(PDMPError, ValueError):
    pass


class NoDivisions(PDMPError, ValueError):
    pass


class UsageError(PDMPError):
    pass
