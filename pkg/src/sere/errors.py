"""Exception hierarchy.

Everything raised for bad inputs derives from :class:`ValidationError`, which the
CLI maps to exit code 2.
"""


class SereError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SereError, ValueError):
    """Invalid input parameters or configuration."""


class StabilityViolation(ValidationError):
    """Branching ratio alpha/beta is not strictly below one."""


class NonPositiveParameter(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class NotStochastic(ValidationError):
    """Transition matrix has negative entries or rows not summing to one."""


class NotErgodic(ValidationError):
    """Chain is reducible or periodic where an ergodic chain is required."""


class SingularSystem(SereError):
    pass


class OutOfHorizon(ValidationError):
    pass


class InvalidMark(ValidationError):
    """A multiplicative mark c(x) <= -1 would make the price non-positive."""


class HorizonTooShort(ValidationError):
    pass


class BalanceViolated(ValidationError):
    """The rho-average that must vanish for the diffusion regime does not."""


class NegativeVariance(SereError):
    pass


class MatrixOverflow(SereError, OverflowError):
    pass


class ConfigError(ValidationError):
    """Malformed or inconsistent experiment configuration."""
