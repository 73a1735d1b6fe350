"""Stochastic goal dynamics with gauge integration, path-integral player
weights, stochastic-game equilibria and two verification side-theories
(simplicial Lefschetz traces and a discrete free-field metric)."""

from .errors import GoalDynError, InvalidSpec, NumericalError

__version__ = "0.1.0"

__all__ = ["GoalDynError", "InvalidSpec", "NumericalError", "__version__"]
