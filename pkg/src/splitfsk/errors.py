"""Exception types raised across the package."""


class SplitFSKError(Exception):
    """Base class for all package errors."""


class DomainError(SplitFSKError, ValueError):
    pass


class NumericFailure(SplitFSKError, ArithmeticError):
    pass


class SingularSystem(NumericFailure):
    pass


class NoSplitInRange(SplitFSKError):
    pass


class RepeatedPoles(NumericFailure):
    pass


class AliasingRisk(SplitFSKError, ValueError):
    pass


class UnstableDiscretization(NumericFailure):
    pass


class LengthMismatch(SplitFSKError, ValueError):
    pass


class SpecInfeasible(SplitFSKError):
    """Filter specs not met with the given tap budget.

    ``achieved`` carries the measured ripple / attenuation.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved or {}


class SingularInductance(SplitFSKError, ValueError):
    pass


class StepTooLarge(SplitFSKError, ValueError):
    pass


class NotSettled(SplitFSKError):
    pass


class FormatError(SplitFSKError, ValueError):
    pass


class ConfigError(SplitFSKError, ValueError):
    pass
