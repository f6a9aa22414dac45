"""Replicator-dynamics task allocation for robot swarms at three fidelities.

``core`` holds the mean-field model and its linearisation, ``odeint`` the
fixed-step integrator, ``ssa`` the count-level stochastic simulator, ``micro``
the agent-based simulator and ``experiment``/``cli`` the batch runner.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Classification,
    EquilibriumReport,
    FeedbackGains,
    PayoffMatrix,
    TaskGraph,
    build_payoff_example1,
    build_payoff_example2,
    classify,
    controlled_rhs,
    equilibrium_example1,
    equilibrium_example2,
    feedback_rate,
    interior_equilibrium,
    jacobian,
    replicator_rhs,
)
from .errors import (  # noqa: E402
    ConfigError,
    DegeneratePopulationError,
    DivergenceError,
    ParameterError,
    RangeError,
    SingularEquilibriumError,
    StallError,
    SwarmError,
)
from .odeint import Trajectory, integrate, sample  # noqa: E402

__all__ = [
    "Classification", "EquilibriumReport", "FeedbackGains", "PayoffMatrix", "TaskGraph",
    "build_payoff_example1", "build_payoff_example2", "classify", "controlled_rhs",
    "equilibrium_example1", "equilibrium_example2", "feedback_rate", "interior_equilibrium",
    "jacobian", "replicator_rhs", "ConfigError", "DegeneratePopulationError",
    "DivergenceError", "ParameterError", "RangeError", "SingularEquilibriumError",
    "StallError", "SwarmError", "Trajectory", "integrate", "sample",
]
