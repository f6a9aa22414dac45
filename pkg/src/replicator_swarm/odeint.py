"""Fixed-step RK4 reference trajectories on the simplex."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SIMPLEX_TOL, population_vector
from .errors import DivergenceError, ParameterError, RangeError
from .tableio import write_table

RENORM_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Trajectory:
    """States on a uniform time grid.

    ``max_drift`` is the largest ``|sum(y) - 1|`` seen before any
    renormalisation; ``renormalizations`` counts the steps that needed one.
    """

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)
    renormalizations: int = 0
    max_drift: float = 0.0

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        s = np.array(self.states, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ParameterError("times must be a nonempty 1-D array")
        if s.ndim != 2 or s.shape[0] != t.size:
            raise ParameterError(f"states shape {s.shape} does not match {t.size} times")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ParameterError("times must be strictly increasing")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def m(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.times.size


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    dt: float,
    t_end: float,
    meta: dict | None = None,
) -> Trajectory:
    """Classic fourth-order Runge-Kutta with a clamp-and-renormalise guard.

    ``rhs(t, y)`` must return the time derivative.  The grid is
    ``0, dt, ..., n*dt`` with ``n = round(t_end / dt)``.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not t_end >= dt:
        raise ParameterError(f"t_end must be at least dt, got {t_end}")
    y = population_vector(y0).copy()
    n = int(round(t_end / dt))
    times = dt * np.arange(n + 1)
    states = np.empty((n + 1, y.size))
    states[0] = y
    renorms = 0
    max_drift = abs(y.sum() - 1.0)
    half = 0.5 * dt
    for step in range(n):
        t = times[step]
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(times[step + 1])
        drift = abs(y.sum() - 1.0)
        max_drift = max(max_drift, drift)
        if drift > RENORM_THRESHOLD or y.min() < 0:
            y = np.clip(y, 0.0, None)
            y /= y.sum()
            renorms += 1
        states[step + 1] = y
    return Trajectory(times, states, dict(meta or {}), renorms, max_drift)


def sample(traj: Trajectory, t: float) -> np.ndarray:
    """Linear interpolation in time; exact on grid points."""
    times = traj.times
    if not times[0] <= t <= times[-1]:
        raise RangeError(f"t={t} outside [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, t, side="right")) - 1
    if times[i] == t or i == times.size - 1:
        return traj.states[i].copy()
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1.0 - w) * traj.states[i] + w * traj.states[i + 1]


def resample(traj: Trajectory, grid) -> np.ndarray:
    """Vectorised :func:`sample` over a sorted grid inside the trajectory."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < traj.times[0] or grid[-1] > traj.times[-1]):
        raise RangeError("grid extends beyond the trajectory")
    return np.column_stack(
        [np.interp(grid, traj.times, traj.states[:, i]) for i in range(traj.m)]
    )


def on_simplex(traj: Trajectory, tol: float = SIMPLEX_TOL) -> bool:
    s = traj.states
    return bool(np.all(s >= -tol) and np.all(np.abs(s.sum(axis=1) - 1.0) <= tol))


def write_trajectory(traj: Trajectory, path, header: dict | None = None, fmt: str = "csv"):
    """Columns ``t, Y_1..Y_M``; header carries the model descriptor."""
    meta = dict(traj.meta)
    meta.update(header or {})
    columns = ["t"] + [f"Y_{i + 1}" for i in range(traj.m)]
    write_table(path, meta, columns, np.column_stack([traj.times, traj.states]), fmt)


def peak_to_peak(traj: Trajectory, task: int, t_min: float = 0.0) -> np.ndarray:
    """Peak-to-peak amplitude of one component per oscillation period.

    Each entry pairs a local maximum with the local minimum that follows it;
    samples before ``t_min`` are ignored so transients can be discarded.
    """
    keep = traj.times >= t_min
    x = traj.states[keep, task]
    if x.size < 3:
        return np.empty(0)
    inner = x[1:-1]
    peaks = np.flatnonzero((inner > x[:-2]) & (inner >= x[2:])) + 1
    troughs = np.flatnonzero((inner < x[:-2]) & (inner <= x[2:])) + 1
    out = []
    for p in peaks:
        after = troughs[troughs > p]
        if after.size:
            out.append(x[p] - x[after[0]])
    return np.array(out)
