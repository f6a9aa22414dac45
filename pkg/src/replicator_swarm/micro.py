"""Point-particle simulation of task switching on spatial encounters.

Agents move ballistically in a rectangle and deflect off its walls.  Two
agents on different tasks that come within the interaction radius of one of
their collaboration channels trigger a single task switch; the pair then
stays in a refractory set until it separates beyond the radius again.

Channel ``(i, j)`` is open-loop when it has only a rate ``k[i, j]`` and
controlled when it has a gain ``alpha[i, j] > 0``.  Controlled radii come
from the tracking error of task ``i`` against the reference, scaled by
either the global robot count (centralized) or the initiating agent's
neighbourhood size (distributed).  The initiator of a pair is the agent
with the lower id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegeneratePopulationError, ParameterError
from .odeint import Trajectory, sample
from .rng import as_rng
from .spatial import pairs_bruteforce, pairs_grid
from .tableio import write_table

CENTRALIZED = "centralized"
DISTRIBUTED = "distributed"


def interaction_radius(area, k_ij, v_ij, n_i, n_j, cap=math.inf) -> float:
    """``r = sqrt(a / pi)`` with ``a = A |k| / (v n_i n_j)``, capped."""
    if not v_ij > 0 or n_i < 1 or n_j < 1:
        raise DegeneratePopulationError(
            f"need positive speed and counts, got v={v_ij}, n_i={n_i}, n_j={n_j}"
        )
    a = area * abs(k_ij) / (v_ij * n_i * n_j)
    return min(math.sqrt(a / math.pi), cap)


def interaction_radius_controlled(
    area, alpha_ij, y_star_count, y_count_i, n_j, v_ij, cap=math.inf
) -> tuple[float, int]:
    """Feedback radius and direction.

    ``a = A alpha (n*_i - n_i) / (v n_j)``.  Direction +1 means task ``i``
    gains; a negative error flips it to -1 and its magnitude sets the radius.
    """
    if not v_ij > 0 or n_j < 1:
        raise DegeneratePopulationError(f"need positive speed and n_j, got v={v_ij}, n_j={n_j}")
    error = y_star_count - y_count_i
    a = area * alpha_ij * error / (v_ij * n_j)
    direction = 1 if error >= 0 else -1
    return min(math.sqrt(abs(a) / math.pi), cap), direction


@dataclass(frozen=True)
class AgentState:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    task: int
    sensing_radius: float = math.inf


@dataclass(frozen=True)
class InteractionRules:
    """Rates, gains and geometry shared by every agent.

    ``relative_speed=None`` uses ``speed_a + speed_b`` for each pair.
    """

    k: np.ndarray
    alpha: np.ndarray | None = None
    relative_speed: float | None = None
    boundary: str = "rotate"
    neighbor_search: str = "auto"
    guard: bool = True

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        object.__setattr__(self, "k", k)
        if self.alpha is not None:
            a = np.array(self.alpha, dtype=float)
            if a.shape != k.shape or np.any(a < 0):
                raise ParameterError("gains must be nonnegative and shaped like the rates")
            object.__setattr__(self, "alpha", a)
        if self.boundary not in ("rotate", "specular"):
            raise ParameterError(f"unknown boundary rule {self.boundary!r}")
        if self.neighbor_search not in ("auto", "grid", "brute"):
            raise ParameterError(f"unknown neighbor search {self.neighbor_search!r}")

    @property
    def m(self) -> int:
        return self.k.shape[0]

    @property
    def gains(self) -> np.ndarray:
        return np.zeros_like(self.k) if self.alpha is None else self.alpha

    @property
    def controlled(self) -> bool:
        return self.alpha is not None and bool(np.any(self.alpha > 0))


@dataclass
class World:
    """Arena plus agent arrays (one entry per agent id)."""

    width: float
    height: float
    positions: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    tasks: np.ndarray
    sensing_radius: np.ndarray
    rules: InteractionRules
    mode: str = CENTRALIZED
    clock: float = 0.0
    # (pair key a*n+b, task_lo, task_hi) of every pair still inside the
    # radius of the channel that last fired between them
    refractory: frozenset = frozenset()

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ParameterError("arena must have positive area")
        if self.mode not in (CENTRALIZED, DISTRIBUTED):
            raise ParameterError(f"unknown estimation mode {self.mode!r}")
        n = len(self.tasks)
        self.positions = np.array(self.positions, dtype=float).reshape(n, 2)
        self.headings = np.array(self.headings, dtype=float).reshape(n)
        self.speeds = np.broadcast_to(np.asarray(self.speeds, dtype=float), (n,)).copy()
        self.tasks = np.array(self.tasks, dtype=np.int64).reshape(n)
        self.sensing_radius = np.broadcast_to(
            np.asarray(self.sensing_radius, dtype=float), (n,)
        ).copy()
        if n and (self.tasks.min() < 0 or self.tasks.max() >= self.rules.m):
            raise ParameterError("task label out of range")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def n(self) -> int:
        return self.tasks.size

    @property
    def cap(self) -> float:
        return 0.5 * min(self.width, self.height)

    def counts(self) -> np.ndarray:
        return np.bincount(self.tasks, minlength=self.rules.m)

    @property
    def agents(self) -> list[AgentState]:
        return [
            AgentState(i, *self.positions[i], self.headings[i], self.speeds[i],
                       int(self.tasks[i]), self.sensing_radius[i])
            for i in range(self.n)
        ]

    @property
    def refractory_pairs(self) -> set[tuple[int, int]]:
        return {divmod(key, self.n) for key, _, _ in self.refractory}

    def copy(self) -> "World":
        return replace(
            self,
            positions=self.positions.copy(),
            headings=self.headings.copy(),
            speeds=self.speeds.copy(),
            tasks=self.tasks.copy(),
            sensing_radius=self.sensing_radius.copy(),
        )


def estimate_populations(agent: int | AgentState, world: World) -> np.ndarray:
    """Task counts over every agent within the sensing radius, self included."""
    i = agent.id if isinstance(agent, AgentState) else int(agent)
    d = np.hypot(*(world.positions - world.positions[i]).T)
    near = d <= world.sensing_radius[i]
    near[i] = True
    return np.bincount(world.tasks[near], minlength=world.rules.m)


GRID_THRESHOLD = 256


def _find_pairs(world: World, radius: float):
    how = world.rules.neighbor_search
    if how == "brute" or (how == "auto" and world.n <= GRID_THRESHOLD):
        return pairs_bruteforce(world.positions, radius)
    return pairs_grid(world.positions, radius, world.width, world.height)


class _Estimator:
    """Per-step population estimates with live recount after each switch."""

    def __init__(self, world: World):
        self.world = world
        m = world.rules.m
        self.global_counts = world.counts()
        self.local = None
        if world.mode == DISTRIBUTED:
            r_max = float(world.sensing_radius.max())
            search = min(r_max, math.hypot(world.width, world.height))
            a, b, d = _find_pairs(world, search)
            a_sees = d <= world.sensing_radius[a]
            b_sees = d <= world.sensing_radius[b]
            src = np.concatenate([a[a_sees], b[b_sees]])
            dst = np.concatenate([b[a_sees], a[b_sees]])
            # watchers[x]: agents whose sensing disc contains x
            order = np.lexsort((src, dst))
            starts = np.searchsorted(dst[order], np.arange(world.n + 1))
            self.watchers = [src[order][starts[i]:starts[i + 1]] for i in range(world.n)]
            local = np.zeros((world.n, m), dtype=np.int64)
            local[np.arange(world.n), world.tasks] += 1
            np.add.at(local, (src, world.tasks[dst]), 1)
            self.local = local

    def pair_estimates(self, a, b, d):
        """Counts vector and neighbourhood size used for each pair (initiator ``a``)."""
        w = self.world
        if self.local is None:
            counts = np.broadcast_to(self.global_counts, (a.size, w.rules.m))
            return counts, np.full(a.size, w.n)
        counts = self.local[a].copy()
        unseen = d > w.sensing_radius[a]
        counts[unseen, w.tasks[b[unseen]]] += 1
        return counts, counts.sum(axis=1)

    def apply_switch(self, agent, old, new):
        self.global_counts[old] -= 1
        self.global_counts[new] += 1
        if self.local is not None:
            watchers = self.watchers[agent]
            np.subtract.at(self.local, (watchers, old), 1)
            np.add.at(self.local, (watchers, new), 1)
            self.local[agent, old] -= 1
            self.local[agent, new] += 1


def pair_channels(world: World, est: _Estimator, a, b, d, y_star):
    """Vectorised channel choice for agent pairs ``a < b``.

    Returns ``(radius, gain_task, lose_task)``.  Channels are tried in the
    order ``(lo, hi)`` then ``(hi, lo)`` of the two task labels; the first
    one whose radius exceeds the distance wins, otherwise the larger radius
    is reported with the first channel's direction.
    """
    rules = world.rules
    ta, tb = world.tasks[a], world.tasks[b]
    lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
    counts, size = est.pair_estimates(a, b, d)
    if rules.relative_speed is not None:
        v = np.full(a.size, float(rules.relative_speed))
    else:
        v = world.speeds[a] + world.speeds[b]
    cand = []
    for i, j in ((lo, hi), (hi, lo)):
        cand.append(_channel_radius(world, counts, size, v, i, j, y_star))
    (r1, g1, l1), (r2, g2, l2) = cand
    use_second = (d >= r1) & (d < r2)
    radius = np.where(d < r1, r1, np.where(use_second, r2, np.maximum(r1, r2)))
    radius = np.where(ta == tb, 0.0, radius)
    gain = np.where(use_second, g2, g1)
    lose = np.where(use_second, l2, l1)
    return radius, gain, lose


def _channel_radius(world, counts, size, v, i, j, y_star):
    rules = world.rules
    rows = np.arange(i.size)
    k = rules.k[i, j]
    alpha = rules.gains[i, j]
    n_i = counts[rows, i].astype(float)
    n_j = counts[rows, j].astype(float)
    ok = (v > 0) & (i != j)
    radius = np.zeros(i.size)
    direction = np.ones(i.size, dtype=np.int64)

    ctrl = ok & (alpha > 0)
    if ctrl.any():
        if y_star is None:
            raise ParameterError("controlled channels need a reference trajectory")
        target = y_star[i[ctrl]] * size[ctrl]
        error = target - n_i[ctrl]
        area = world.area * alpha[ctrl] * error / (v[ctrl] * n_j[ctrl])
        radius[ctrl] = np.sqrt(np.abs(area) / np.pi)
        direction[ctrl] = np.where(error >= 0, 1, -1)

    open_ = ok & ~(alpha > 0) & (k != 0)
    if open_.any():
        area = world.area * np.abs(k[open_]) / (v[open_] * n_i[open_] * n_j[open_])
        radius[open_] = np.sqrt(area / np.pi)
        direction[open_] = np.where(k[open_] > 0, 1, -1)

    radius = np.minimum(radius, world.cap)
    gain = np.where(direction > 0, i, j)
    lose = np.where(direction > 0, j, i)
    return radius, gain, lose


def _stored_channel_radius(world, est, a, b, d, lo, hi, y_star):
    counts, size = est.pair_estimates(a, b, d)
    if world.rules.relative_speed is not None:
        v = np.full(a.size, float(world.rules.relative_speed))
    else:
        v = world.speeds[a] + world.speeds[b]
    # a stored task may have emptied out of the estimate since the switch
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = _channel_radius(world, counts, size, v, lo, hi, y_star)[0]
        r2 = _channel_radius(world, counts, size, v, hi, lo, y_star)[0]
    return np.nan_to_num(np.maximum(r1, r2), nan=0.0)


def _live_channel(world: World, est: _Estimator, a: int, b: int, d: float, y_star):
    """Scalar twin of :func:`pair_channels` for the sequential resolution pass."""
    ta, tb = int(world.tasks[a]), int(world.tasks[b])
    if ta == tb:
        return 0.0, -1, -1
    rules = world.rules
    if est.local is None:
        counts, size = est.global_counts, world.n
    else:
        counts = est.local[a].copy()
        if d > world.sensing_radius[a]:
            counts[tb] += 1
        size = int(counts.sum())
    if rules.relative_speed is not None:
        v = float(rules.relative_speed)
    else:
        v = float(world.speeds[a] + world.speeds[b])
    if not v > 0:
        return 0.0, -1, -1
    best = (0.0, -1, -1)
    for i, j in ((min(ta, tb), max(ta, tb)), (max(ta, tb), min(ta, tb))):
        alpha, k = rules.gains[i, j], rules.k[i, j]
        if alpha > 0:
            error = y_star[i] * size - float(counts[i])
            area = world.area * alpha * error / (v * float(counts[j]))
            r = math.sqrt(abs(area) / math.pi)
            direction = 1 if error >= 0 else -1
        elif k != 0:
            area = world.area * abs(k) / (v * float(counts[i]) * float(counts[j]))
            r = math.sqrt(area / math.pi)
            direction = 1 if k > 0 else -1
        else:
            continue
        r = min(r, world.cap)
        hit = (r, i, j) if direction > 0 else (r, j, i)
        if d < r:
            return hit
        if r > best[0]:
            best = hit
    return best


def _move(world: World, dt: float):
    pos = world.positions
    h = world.headings
    pos += (world.speeds * dt)[:, None] * np.column_stack([np.cos(h), np.sin(h)])
    w, ht = world.width, world.height
    out = np.column_stack([pos[:, 0] < 0, pos[:, 0] > w, pos[:, 1] < 0, pos[:, 1] > ht])
    hit = out.any(axis=1)
    if hit.any():
        if world.rules.boundary == "specular":
            xs = out[:, 0] | out[:, 1]
            ys = out[:, 2] | out[:, 3]
            h[xs] = np.pi - h[xs]
            h[ys] = -h[ys]
        else:
            _rotate_inward(world, out, hit)
        np.clip(pos[:, 0], 0.0, w, out=pos[:, 0])
        np.clip(pos[:, 1], 0.0, ht, out=pos[:, 1])
        np.mod(h, 2 * np.pi, out=h)


def _inward(h, out):
    c, s = np.cos(h), np.sin(h)
    bad = (out[:, 0] & ~(c > 0)) | (out[:, 1] & ~(c < 0))
    bad |= (out[:, 2] & ~(s > 0)) | (out[:, 3] & ~(s < 0))
    return ~bad


def _rotate_inward(world, out, hit):
    h = world.headings
    todo = hit & ~_inward(h, out)
    for _ in range(4):
        if not todo.any():
            return
        h[todo] += np.pi / 2
        todo &= ~_inward(h, out)
    if todo.any():
        # axis-aligned heading straight into a corner: aim at the centre
        centre = np.array([world.width / 2, world.height / 2])
        delta = centre - world.positions[todo]
        h[todo] = np.arctan2(delta[:, 1], delta[:, 0])


def _pair_key(n, a, b):
    return a * n + b


def step_world(world: World, dt: float, reference: Trajectory | None = None, rng=None,
               encounters: list | None = None) -> World:
    """Advance one tick; returns a new World.

    Switches are resolved in ascending ``(a, b)`` order.  Each candidate is
    re-checked against the live counts before it fires, so earlier switches
    in the same tick shrink or grow later radii.  ``rng`` is accepted for API
    symmetry; stepping itself is deterministic.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    w = world.copy()
    _move(w, dt)
    w.clock = world.clock + dt
    y_star = None
    if w.rules.controlled:
        if reference is None:
            raise ParameterError("controlled rules need a reference trajectory")
        y_star = sample(reference, min(w.clock, reference.t_end))

    est = _Estimator(w)
    n = w.n
    a, b, d = _find_pairs(w, w.cap)
    refr = {key: (lo, hi) for key, lo, hi in world.refractory}
    if a.size:
        radius, _, _ = pair_channels(w, est, a, b, d, y_star)
        fire = (d < radius)
        if refr:
            fire &= ~np.isin(_pair_key(n, a, b), np.fromiter(refr, np.int64))
        for pa, pb, pd in zip(a[fire].tolist(), b[fire].tolist(), d[fire].tolist()):
            r, gain, lose = _live_channel(w, est, pa, pb, pd, y_star)
            if not pd < r:
                continue
            switcher = int(pa) if w.tasks[pa] == lose else int(pb)
            refr[_pair_key(n, pa, pb)] = (min(gain, lose), max(gain, lose))
            if w.rules.guard and est.global_counts[lose] <= 1:
                continue
            w.tasks[switcher] = gain
            est.apply_switch(switcher, lose, gain)
            if encounters is not None:
                encounters.append((w.clock, int(pa), int(pb), switcher, lose, gain))

    if refr:
        # separation is judged against the channel that fired, at current
        # estimates; after a switch both agents share a task, so the pair's
        # own labels would give radius 0 and release it immediately
        keys = np.array(sorted(refr), dtype=np.int64)
        ra, rb = keys // n, keys % n
        lo = np.array([refr[k][0] for k in keys.tolist()], dtype=np.int64)
        hi = np.array([refr[k][1] for k in keys.tolist()], dtype=np.int64)
        rd = np.hypot(*(w.positions[ra] - w.positions[rb]).T)
        radius = _stored_channel_radius(w, est, ra, rb, rd, lo, hi, y_star)
        stay = rd <= radius
        refr = {(int(k), int(x), int(y)) for k, x, y in zip(keys[stay], lo[stay], hi[stay])}
    else:
        refr = set()
    w.refractory = frozenset(refr)
    return w


@dataclass
class MicroConfig:
    counts0: list
    rules: InteractionRules
    reference: Trajectory | None = None
    arena: tuple = (18.0, 18.0)
    speed: float = 1.0
    dt: float = 0.05
    t_end: float = 100.0
    mode: str = CENTRALIZED
    sensing_radius: float = math.inf
    record_every: int = 1
    snapshot_every: int | None = None


@dataclass
class MicroResult:
    trajectory: Trajectory
    counts: np.ndarray
    encounters: list
    snapshots: list = field(default_factory=list)

    def write_snapshots(self, path, header=None, fmt="csv"):
        cols = ["t", "id", "x", "y", "heading", "task"]
        return write_table(path, dict(header or {}), cols, self.snapshots, fmt)


def init_world(config: MicroConfig, rng) -> World:
    counts0 = np.asarray(config.counts0)
    if np.any(counts0 < 0) or counts0.size != config.rules.m:
        raise ParameterError(f"bad initial counts {config.counts0}")
    n = int(counts0.sum())
    if config.rules.guard and (counts0.size > n or np.any(counts0 < 1)):
        raise ParameterError(
            f"{counts0.size} tasks need at least one agent each, got counts {list(counts0)}"
        )
    rng = as_rng(rng)
    w, h = config.arena
    positions = rng.uniform(size=(n, 2)) * np.array([w, h])
    headings = rng.uniform(0.0, 2 * np.pi, size=n)
    tasks = np.repeat(np.arange(counts0.size), counts0)
    return World(w, h, positions, headings, config.speed, tasks, config.sensing_radius,
                 config.rules, config.mode)


def run_micro(config: MicroConfig, rng=0) -> MicroResult:
    world = init_world(config, rng)
    steps = int(round(config.t_end / config.dt))
    n = world.n
    times, counts, encounters, snaps = [0.0], [world.counts()], [], []

    def snapshot(wd):
        for i in range(wd.n):
            snaps.append([wd.clock, i, *wd.positions[i], wd.headings[i], int(wd.tasks[i])])

    if config.snapshot_every:
        snapshot(world)
    for k in range(1, steps + 1):
        world = step_world(world, config.dt, config.reference, encounters=encounters)
        # clock from the step index keeps the grid uniform in floating point
        world.clock = k * config.dt
        if k % config.record_every == 0 or k == steps:
            times.append(world.clock)
            counts.append(world.counts())
        if config.snapshot_every and k % config.snapshot_every == 0:
            snapshot(world)
    counts = np.array(counts)
    traj = Trajectory(np.array(times), counts / n, {"fidelity": "micro", "mode": config.mode})
    return MicroResult(traj, counts, encounters, snaps)
