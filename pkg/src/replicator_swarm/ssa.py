"""Gillespie direct-method simulation of the pairwise switching process.

Each nonzero rate ``k[i, j]`` is one channel with propensity
``|k[i, j]| * n_i * n_j``.  A positive rate moves one robot from ``j`` to
``i``; a negative rate moves one robot from ``i`` to ``j``.

Feedback rates depend on the reference trajectory and so on time.  They are
treated quasi-statically: recomputed at every event time from the reference
sampled there, and held constant until the next event.  This is not an exact
SSA for time-varying propensities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import FeedbackGains, PayoffMatrix, _rates
from .errors import DegeneratePopulationError, ParameterError, StallError
from .odeint import Trajectory, sample
from .rng import RNG_ALGORITHM, as_rng
from .tableio import write_table


def count_vector(counts, total: int | None = None) -> np.ndarray:
    c = np.asarray(counts)
    if c.ndim != 1 or c.size < 2:
        raise ParameterError("counts must be a 1-D vector over at least two tasks")
    if not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0):
        raise ParameterError(f"counts must be nonnegative integers, got {counts}")
    c = c.astype(np.int64)
    if total is not None and c.sum() != total:
        raise ParameterError(f"counts sum to {c.sum()}, expected {total}")
    return c


def discretize_rates(k, n_total: int) -> np.ndarray:
    """Continuous fraction-level rates divided by N.

    The published discrete experiments use hand-retuned values, not this
    conversion; use it only when no count-level rates are available.
    """
    warnings.warn(
        "k/N conversion of continuous rates does not reproduce published "
        "count-level parameters; prefer explicit discrete rates",
        stacklevel=2,
    )
    return _rates(k) / float(n_total)


def jump_mean_field(k) -> np.ndarray:
    """Payoff whose replicator flow is the mean field of the jump process.

    Channel ``(i, j)`` moves mass ``k_ij y_i y_j`` into ``i`` out of ``j``, so
    the count drift is ``y_i ((K - K^T) y)_i``; for an antisymmetric matrix
    the replicator mean-payoff term vanishes and the two coincide.
    """
    kk = _rates(k)
    return kk - kk.T


class ConstantRates:
    time_varying = False

    def __init__(self, k):
        self.k = _rates(k)
        self.channels = np.argwhere(self.k != 0)

    @property
    def m(self):
        return self.k.shape[0]

    def rates(self, counts, t):
        return self.k


class FeedbackRates:
    """Tracking rates ``alpha_ij (N y*_i(t) / n_i - 1)``.

    Entries without a gain keep their ``open_loop`` rate.
    """

    time_varying = True

    def __init__(self, alpha, reference: Trajectory, n_total: int, open_loop=None):
        self.alpha = alpha.alpha if isinstance(alpha, FeedbackGains) else np.asarray(alpha, float)
        self.reference = reference
        self.n_total = int(n_total)
        m = self.alpha.shape[0]
        if reference.m != m:
            raise ParameterError(f"reference has {reference.m} tasks, gains have {m}")
        self.open_loop = np.zeros((m, m)) if open_loop is None else _rates(open_loop)
        self.open_loop = np.where(self.alpha > 0, 0.0, self.open_loop)
        self.channels = np.argwhere((self.alpha > 0) | (self.open_loop != 0))
        self._rows = np.flatnonzero((self.alpha > 0).any(axis=1))

    @property
    def m(self):
        return self.alpha.shape[0]

    def target_counts(self, t):
        return sample(self.reference, min(t, self.reference.t_end)) * self.n_total

    def rates(self, counts, t):
        counts = np.asarray(counts, dtype=float)
        if np.any(counts[self._rows] <= 0):
            raise DegeneratePopulationError(f"controlled task has no robots: {counts}")
        ratio = np.zeros(self.m)
        ratio[self._rows] = self.target_counts(t)[self._rows] / counts[self._rows] - 1.0
        return self.alpha * ratio[:, None] + self.open_loop

    def next_change(self, t):
        """First reference grid time strictly after ``t``."""
        times = self.reference.times
        i = int(np.searchsorted(times, t, side="right"))
        return float(times[i]) if i < times.size else math.inf


@dataclass(frozen=True)
class PropensityTable:
    """One row per channel: pair ``(i, j)``, propensity, and who gains.

    ``direction`` is +1 when task ``i`` gains (rate > 0) and -1 when task ``j``
    gains.
    """

    pairs: np.ndarray
    propensity: np.ndarray
    direction: np.ndarray

    @property
    def total(self) -> float:
        return float(self.propensity.sum())

    @property
    def gainer(self) -> np.ndarray:
        return np.where(self.direction > 0, self.pairs[:, 0], self.pairs[:, 1])

    @property
    def loser(self) -> np.ndarray:
        return np.where(self.direction > 0, self.pairs[:, 1], self.pairs[:, 0])

    def __len__(self):
        return self.propensity.size

    def drop(self, mask) -> "PropensityTable":
        keep = ~np.asarray(mask, dtype=bool)
        return PropensityTable(self.pairs[keep], self.propensity[keep], self.direction[keep])

    def guarded(self, counts) -> "PropensityTable":
        """Remove channels whose loser is down to a single robot."""
        return self.drop(np.asarray(counts)[self.loser] <= 1)


def propensities(source, counts, t: float = 0.0) -> PropensityTable:
    """Propensity table at the current counts (and time, for feedback)."""
    if isinstance(source, (PayoffMatrix, np.ndarray, list)):
        source = ConstantRates(source)
    counts = np.asarray(counts)
    k = source.rates(counts, t)
    ch = source.channels
    i, j = ch[:, 0], ch[:, 1]
    rate = k[i, j]
    prop = np.abs(rate) * counts[i] * counts[j]
    direction = np.where(rate >= 0, 1, -1)
    return PropensityTable(ch.copy(), prop.astype(float), direction)


def select_event(table: PropensityTable, r1: float) -> int:
    """Cumulative-sum inversion: first channel whose running total exceeds ``r1 * b_n``."""
    cum = np.cumsum(table.propensity)
    target = r1 * cum[-1]
    idx = int(np.searchsorted(cum, target, side="right"))
    if idx >= len(table):
        # r1*b_n rounded onto the last boundary; take the last live channel
        idx = int(np.flatnonzero(table.propensity > 0)[-1])
    return idx


def waiting_time(total: float, r2: float) -> float:
    return math.log(1.0 / r2) / total


class Event(NamedTuple):
    t: float
    i: int
    j: int
    direction: int
    counts: np.ndarray


def _uniform_open(rng) -> float:
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


def step(counts, table: PropensityTable, rng, t: float):
    """One direct-method step.  Returns ``(event, new_counts, new_time)``."""
    if not table.total > 0:
        raise StallError("no channel has positive propensity")
    r1 = rng.random()
    r2 = _uniform_open(rng)
    k = select_event(table, r1)
    t_next = t + waiting_time(table.total, r2)
    new = np.array(counts, dtype=np.int64)
    new[table.loser[k]] -= 1
    new[table.gainer[k]] += 1
    i, j = table.pairs[k]
    return Event(t_next, int(i), int(j), int(table.direction[k]), new), new, t_next


@dataclass
class EventLog:
    counts0: np.ndarray
    times: np.ndarray
    pairs: np.ndarray
    directions: np.ndarray
    counts: np.ndarray
    seed: int | None
    termination: str
    draws: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_total(self) -> int:
        return int(self.counts0.sum())

    def __len__(self):
        return self.times.size

    def counts_at(self, grid) -> np.ndarray:
        """Zero-order hold of the count process onto ``grid``."""
        grid = np.asarray(grid, dtype=float)
        idx = np.searchsorted(self.times, grid, side="right")
        table = np.vstack([self.counts0[None, :], self.counts])
        return table[idx]

    def to_trajectory(self, grid, meta: dict | None = None) -> Trajectory:
        fractions = self.counts_at(grid) / float(self.n_total)
        return Trajectory(np.asarray(grid, float), fractions, dict(meta or self.meta))

    def write(self, path, header: dict | None = None, fmt: str = "csv"):
        m = self.counts0.size
        meta = {"rng": RNG_ALGORITHM, "seed": self.seed, "termination": self.termination}
        meta.update(self.meta)
        meta.update(header or {})
        columns = ["t", "pair_i", "pair_j", "direction"] + [f"Yhat_{i + 1}" for i in range(m)]
        rows = [
            [t, int(p[0]), int(p[1]), int(d), *(int(c) for c in cs)]
            for t, p, d, cs in zip(self.times, self.pairs, self.directions, self.counts)
        ]
        return write_table(path, meta, columns, rows, fmt)


def run(
    source,
    counts0,
    t_end: float,
    max_events: int = 10_000_000,
    seed=0,
    guard: bool = True,
    record_draws: bool = False,
) -> EventLog:
    """Simulate until ``t_end`` or ``max_events``.

    With ``guard`` on, a channel that would empty its losing task is removed
    before selection; drawing from the pruned table has the same law as
    rejecting that event and resampling the rest.
    """
    if isinstance(source, (PayoffMatrix, np.ndarray, list)):
        source = ConstantRates(source)
    counts = count_vector(counts0)
    if counts.size != source.m:
        raise ParameterError(f"{counts.size} counts for a {source.m}-task model")
    if guard and counts.min() < 1:
        raise ParameterError("extinction guard needs every initial count >= 1")
    rng = as_rng(seed)
    seed_value = None if isinstance(seed, np.random.Generator) else int(seed)

    times, pairs, dirs, hist, draws = [], [], [], [], []
    t = 0.0
    termination = "time-limit"
    while True:
        if len(times) >= max_events:
            termination = "event-limit"
            break
        table = propensities(source, counts, t)
        if guard:
            table = table.guarded(counts)
        if not table.total > 0:
            if source.time_varying:
                t = source.next_change(t)
                if t >= t_end:
                    break
                continue
            termination = "stalled"
            break
        r1 = rng.random()
        r2 = _uniform_open(rng)
        t_next = t + waiting_time(table.total, r2)
        if t_next > t_end:
            break
        k = select_event(table, r1)
        counts = counts.copy()
        counts[table.loser[k]] -= 1
        counts[table.gainer[k]] += 1
        t = t_next
        times.append(t)
        pairs.append(table.pairs[k])
        dirs.append(table.direction[k])
        hist.append(counts)
        if record_draws:
            draws.append((r1, r2))

    m = counts.size
    return EventLog(
        counts0=count_vector(counts0),
        times=np.array(times, dtype=float),
        pairs=np.array(pairs, dtype=np.int64).reshape(-1, 2),
        directions=np.array(dirs, dtype=np.int64),
        counts=np.array(hist, dtype=np.int64).reshape(-1, m),
        seed=seed_value,
        termination=termination,
        draws=np.array(draws).reshape(-1, 2) if record_draws else None,
    )
