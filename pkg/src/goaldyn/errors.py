"""Exception and warning types shared across the package.

Two families: :class:`InvalidSpec` for inputs that violate a stated
invariant (the CLI maps these to exit code 2) and :class:`NumericalError`
for computations that fail on valid inputs (exit code 3).
"""


class GoalDynError(Exception):
    """Base class for every error raised by goaldyn."""


class InvalidSpec(GoalDynError, ValueError):
    """An input violates a documented invariant."""


class DomainPole(InvalidSpec):
    pass


class DimensionMismatch(InvalidSpec):
    pass


class InvalidProbabilities(InvalidSpec):
    pass


class AngleOutOfRange(InvalidSpec):
    """Tackle/dribble angle beyond k*pi (a foul in match terms)."""


class ZeroPayoff(InvalidSpec, ZeroDivisionError):
    pass


class NonPositiveH(InvalidSpec):
    pass


class InvalidComplex(InvalidSpec):
    pass


class NotAChainMap(InvalidSpec):
    pass


class NotSimplicial(InvalidSpec):
    pass


class NoSignChange(InvalidSpec):
    pass


class ScenarioInvalid(InvalidSpec):
    """Scenario file failed validation; ``errors`` holds field-level messages."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors or [])


class NumericalError(GoalDynError, ArithmeticError):
    """A computation on valid inputs could not produce a trustworthy result."""


class NonFinite(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GaugeTooFine(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class MassLoss(NumericalError):
    pass


class SingularFOC(NumericalError):
    pass


class NegativeDiffusion(RuntimeWarning):
    """Emitted when sigma* entries are clamped at zero."""


class SingularHessian(RuntimeWarning):
    """Emitted when eigenvalue flooring materially changes a Hessian determinant."""
