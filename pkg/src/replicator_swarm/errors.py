"""Exception hierarchy shared by every simulator layer."""


class SwarmError(Exception):
    """Base class for all package errors."""


class ParameterError(SwarmError, ValueError):
    """Invalid argument: bad rate, wrong dimension, broken invariant."""


class DegeneratePopulationError(ParameterError):
    """A population fraction or count is zero where it is used as a divisor."""


class SingularEquilibriumError(SwarmError):
    """The equilibrium formula has no solution for the given rates."""


class DivergenceError(SwarmError):
    """Numerical integration produced a non-finite state."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite state at t={t:g}")


class StallError(SwarmError):
    """A stochastic run has no event that can fire."""


class ConfigError(SwarmError):
    """Experiment configuration failed validation.

    ``fields`` lists every offending key so the user can fix them in one pass.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        self.fields = [field for field, _ in self.problems]
        lines = "\n".join(f"  {field}: {why}" for field, why in self.problems)
        super().__init__(f"invalid configuration:\n{lines}")


class RangeError(SwarmError, ValueError):
    """Requested time lies outside a trajectory."""
