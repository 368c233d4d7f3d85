"""Exception hierarchy.

Three families map onto the CLI exit codes: invalid input (1), a violated
parameter condition of the theory (2) and an exhausted runtime budget (3).
"""


class NoisyFractalError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(NoisyFractalError, ValueError):
    """Invalid input: a parameter or configuration value is out of range."""


class RatioOutOfRange(ValidationError):
    pass


class TooFewMaps(ValidationError):
    pass


class UnknownFamily(ValidationError):
    pass


class BadParameters(ValidationError):
    pass


class InvalidState(ValidationError):
    pass


class DegenerateDensity(ValidationError):
    pass


class ConditionViolation(NoisyFractalError):
    """A parameter inequality required by the analytic results does not hold."""

    def __init__(self, message, inequality=None):
        super().__init__(message)
        self.inequality = inequality


class Case1ConditionViolated(ConditionViolation):
    pass


class ChaosConditionViolated(ConditionViolation):
    pass


class BudgetExceeded(NoisyFractalError):
    """A configured size or iteration budget was exhausted."""


class ToleranceNotMet(BudgetExceeded):
    pass


class DepthTooLarge(BudgetExceeded):
    pass


class ResolutionOverflow(BudgetExceeded):
    pass


class MaxStageExceeded(BudgetExceeded):
    pass
