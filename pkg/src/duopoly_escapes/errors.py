"""Exception types raised by the numerical routines."""


class DuopolyError(Exception):
    """Base class for all package errors."""


class DegenerateBelief(DuopolyError, ValueError):
    """Belief makes the best-response denominator B - C*alpha1 non-positive."""


class SingularR(DuopolyError, ArithmeticError):
    """Second-moment matrix could not be inverted even after regularization."""

    def __init__(self, msg: str, period: int | None = None):
        super().__init__(msg if period is None else f"{msg} (period {period})")
        self.period = period


class NonFinite(DuopolyError, ArithmeticError):
    """An ODE state became NaN/inf or left its admissible region."""


class NoRealRoots(DuopolyError, ValueError):
    """Threshold quadratic has no real roots (noise variance too large)."""


class NoSignChange(DuopolyError, ValueError):
    """Bracketing search found no sign change."""


class MgfDiverges(DuopolyError, ArithmeticError):
    """Moment generating function does not exist at this costate."""


class NoExit(DuopolyError):
    """A shot path did not leave the exit set before the horizon."""


class AllShotsFailed(DuopolyError):
    """Every restart of the escape-cost minimization failed to exit."""


class ConfigError(DuopolyError, ValueError):
    """Invalid experiment configuration."""
