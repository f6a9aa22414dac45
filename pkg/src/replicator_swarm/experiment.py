"""Multi-trial experiment runner, tracking metrics and equilibrium analysis."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, ModelSpec
from .core import (
    ZERO_REAL_TOL,
    Classification,
    EquilibriumReport,
    conjugate_pair_real_part,
    controlled_rhs,
    equilibrium_example1,
    equilibrium_report,
    interior_equilibrium,
    replicator_rhs,
)
from .errors import ConfigError, DivergenceError, RangeError, SingularEquilibriumError, StallError
from .micro import InteractionRules, MicroConfig, run_micro
from .odeint import Trajectory, integrate, resample, sample
from .rng import RNG_ALGORITHM, trial_rng
from .ssa import ConstantRates, FeedbackRates, discretize_rates
from .ssa import run as run_ssa
from .tableio import write_table

log = logging.getLogger(__name__)


@dataclass
class TrialResult:
    trial: int
    trajectory: Trajectory
    rmse: np.ndarray
    termination: str = "time-limit"
    n_events: int = 0
    events: object = None


@dataclass
class RunReport:
    config: ExperimentConfig
    reference: Trajectory
    trials: list
    mean: np.ndarray
    std: np.ndarray
    seeds: list
    wall_clock: float = 0.0
    files: list = field(default_factory=list)

    @property
    def rmse(self) -> np.ndarray:
        """Per-trial, per-task RMSE, shape ``(trials, M)``."""
        return np.array([t.rmse for t in self.trials])

    @property
    def mean_rmse(self) -> float:
        return float(self.rmse.mean())

    def summary(self) -> dict:
        return {
            "name": self.config.name,
            "fidelity": self.config.fidelity,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "rng": RNG_ALGORITHM,
            "trials": [
                {
                    "trial": t.trial,
                    "rmse": [float(x) for x in t.rmse],
                    "mean_rmse": float(np.mean(t.rmse)),
                    "termination": t.termination,
                    "events": t.n_events,
                }
                for t in self.trials
            ],
            "mean_rmse": self.mean_rmse,
        }


def tracking_error(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    """Per-task RMSE of ``traj`` against ``ref`` on the reference grid.

    ``traj`` must already hold fractions.  Reference grid points outside the
    trajectory's time span are ignored; no overlap at all is an error.
    """
    if traj.m != ref.m:
        raise RangeError(f"{traj.m} tasks vs {ref.m} in the reference")
    lo, hi = traj.times[0], traj.times[-1]
    grid_mask = (ref.times >= lo) & (ref.times <= hi)
    if not grid_mask.any():
        raise RangeError("trajectory and reference do not overlap in time")
    grid = ref.times[grid_mask]
    if traj.times.shape == ref.times.shape and np.array_equal(traj.times, ref.times):
        states = traj.states
    else:
        states = resample(traj, grid)
    diff = states - ref.states[grid_mask]
    return np.sqrt(np.mean(diff**2, axis=0))


def hold(times, values, grid) -> np.ndarray:
    """Zero-order hold of a piecewise-constant signal onto ``grid``."""
    idx = np.searchsorted(np.asarray(times), np.asarray(grid), side="right") - 1
    return np.asarray(values)[np.clip(idx, 0, None)]


def build_reference(config: ExperimentConfig) -> Trajectory:
    spec = config.reference
    k = spec.model.payoff()
    meta = {"model": spec.model.kind, "params": spec.model.params}
    return integrate(lambda t, y: replicator_rhs(k, y), spec.y0, spec.dt, config.t_end, meta)


def _model_rates(config: ExperimentConfig) -> np.ndarray:
    k = config.model.payoff().entries
    if config.model.scale == "continuous" and config.fidelity != "ode":
        k = discretize_rates(k, config.n_total)
    return np.array(k)


def run_trial(config: ExperimentConfig, ref: Trajectory, trial: int) -> TrialResult:
    k = _model_rates(config)
    alpha = config.alpha_matrix()
    if config.fidelity == "ode":
        if config.fractions0 is not None:
            y0 = np.array(config.fractions0)
        elif config.counts0 is not None:
            y0 = np.array(config.counts0) / config.n_total
        else:
            y0 = np.array(config.reference.y0)
        if alpha is None:
            rhs = lambda t, y: replicator_rhs(k, y)  # noqa: E731
        else:
            rhs = lambda t, y: controlled_rhs(alpha, sample(ref, min(t, ref.t_end)), y, k)  # noqa: E731
        traj = integrate(rhs, y0, ref.dt, config.t_end)
        traj = Trajectory(ref.times, resample(traj, ref.times), {"fidelity": "ode"})
        return TrialResult(trial, traj, tracking_error(traj, ref))

    rng = trial_rng(config.seed, trial)
    if config.fidelity == "ssa":
        n = config.n_total
        source = ConstantRates(k) if alpha is None else FeedbackRates(alpha, ref, n, open_loop=k)
        events = run_ssa(source, config.counts0, config.t_end, config.max_events, rng, config.guard)
        if events.termination == "stalled" and len(events) == 0:
            raise StallError(f"trial {trial}: no channel can fire from the initial counts")
        traj = events.to_trajectory(ref.times, {"fidelity": "ssa"})
        return TrialResult(trial, traj, tracking_error(traj, ref), events.termination,
                           len(events), events)

    ms = config.micro
    rules = InteractionRules(
        k=k,
        alpha=alpha,
        relative_speed=ms.relative_speed,
        boundary=ms.boundary,
        neighbor_search=ms.neighbor_search,
        guard=config.guard,
    )
    mc = MicroConfig(
        counts0=list(config.counts0),
        rules=rules,
        reference=ref,
        arena=ms.arena,
        speed=ms.speed,
        dt=ms.dt,
        t_end=config.t_end,
        mode=ms.estimation,
        sensing_radius=ms.sensing_radius if ms.sensing_radius is not None else math.inf,
        record_every=ms.record_every,
        snapshot_every=config.snapshot_every,
    )
    result = run_micro(mc, rng)
    states = hold(result.trajectory.times, result.trajectory.states, ref.times)
    traj = Trajectory(ref.times, states, {"fidelity": "micro"})
    return TrialResult(trial, traj, tracking_error(traj, ref), "time-limit",
                       len(result.encounters), result)


def _run_trial_safe(args):
    config, ref, trial = args
    try:
        return run_trial(config, ref, trial)
    except DivergenceError as exc:
        raise DivergenceError(exc.t, f"trial {trial}: {exc}") from None


def _workers(requested: int | None) -> int:
    if requested:
        return max(1, int(requested))
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int | None = None) -> RunReport:
    """Run every trial, then (optionally) write per-trial, aggregate and summary files.

    Trials are independent and seeded from ``(config.seed, trial)``; results
    and files do not depend on ``workers``.
    """
    started = time.perf_counter()
    ref = build_reference(config)
    jobs = [(config, ref, t) for t in range(config.trials)]
    n_workers = min(_workers(workers), config.trials)
    if n_workers == 1:
        trials = [_run_trial_safe(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            trials = list(pool.map(_run_trial_safe, jobs))

    stack = np.stack([t.trajectory.states for t in trials])
    report = RunReport(
        config=config,
        reference=ref,
        trials=trials,
        mean=stack.mean(axis=0),
        std=stack.std(axis=0),
        seeds=[[config.seed, t] for t in range(config.trials)],
    )
    if out_dir is not None:
        report.files = write_outputs(report, Path(out_dir))
    report.wall_clock = time.perf_counter() - started
    log.info("%s: %d trials in %.2fs, mean RMSE %.4g", config.name, config.trials,
             report.wall_clock, report.mean_rmse)
    return report


def _header(config: ExperimentConfig, **extra) -> dict:
    h = {
        "model": config.model.kind,
        "params": config.model.params,
        "reference": config.reference.model.describe(),
        "fidelity": config.fidelity,
        "seed": config.seed,
        "rng": RNG_ALGORITHM,
        "tool": f"replicator_swarm {__version__}",
        "config_hash": config.config_hash(),
    }
    h.update(extra)
    return h


def write_outputs(report: RunReport, out: Path) -> list[Path]:
    config = report.config
    fmt = config.fmt
    ext = "json" if fmt == "json" else "csv"
    m = config.m
    ref = report.reference
    y_cols = [f"Y_{i + 1}" for i in range(m)]
    star_cols = [f"Ystar_{i + 1}" for i in range(m)]
    files = []
    for t in report.trials:
        rows = np.column_stack([ref.times, t.trajectory.states, ref.states])
        files.append(write_table(out / f"trial_{t.trial:03d}.{ext}", _header(config, trial=t.trial),
                                 ["t", *y_cols, *star_cols], rows, fmt))
        if config.write_events and config.fidelity == "ssa":
            files.append(t.events.write(out / f"events_{t.trial:03d}.{ext}",
                                        _header(config, trial=t.trial), fmt))
        if config.write_events and config.fidelity == "micro":
            enc = [list(e) for e in t.events.encounters]
            files.append(write_table(out / f"encounters_{t.trial:03d}.{ext}",
                                     _header(config, trial=t.trial),
                                     ["t", "agent_a", "agent_b", "switcher", "from_task", "to_task"],
                                     enc, fmt))
            if config.snapshot_every:
                files.append(t.events.write_snapshots(out / f"agents_{t.trial:03d}.{ext}",
                                                      _header(config, trial=t.trial), fmt))
    rows = np.column_stack([ref.times, report.mean, report.std, ref.states])
    cols = ["t", *[f"mean_{i + 1}" for i in range(m)], *[f"std_{i + 1}" for i in range(m)], *star_cols]
    files.append(write_table(out / f"aggregate.{ext}", _header(config, trials=config.trials), cols, rows, fmt))
    summary = out / "summary.json"
    summary.write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    files.append(summary)
    return files


def analyze(model: ModelSpec, point=None) -> list[EquilibriumReport]:
    """Equilibrium reports for a model.

    example1 gives two reports: the closed-form face point (often outside the
    simplex) and the interior equal-fitness point.  example2 gives the uniform
    point.  custom models use ``point`` if supplied, else the interior point.
    """
    k = model.payoff()
    if point is not None:
        return [equilibrium_report(k, point, label="supplied point")]
    if model.kind == "example1":
        p = model.params
        reports = [equilibrium_example1(p["k10"], p["k12"], p["k20"], p["k21"])]
        reports.append(equilibrium_report(k, interior_equilibrium(k), label="example1 interior point"))
        return reports
    if model.kind == "example2":
        return [equilibrium_report(k, np.full(4, 0.25), label="example2 uniform point")]
    return [equilibrium_report(k, interior_equilibrium(k), label="interior point")]


def format_report(r: EquilibriumReport) -> str:
    fmt_c = lambda z: f"{z.real:+.6f}{z.imag:+.6f}i"  # noqa: E731
    lines = [
        f"[{r.label}]",
        f"  point          = [{', '.join(f'{x:.6g}' for x in r.point)}]",
        f"  valid          = {r.valid}",
        f"  residual (inf) = {r.residual:.3e}",
        f"  eigenvalues    = {', '.join(fmt_c(z) for z in r.eigenvalues)}",
        f"  classification = {r.classification}",
    ]
    return "\n".join(lines)


@dataclass
class SweepResult:
    parameter: str
    values: np.ndarray
    eigenvalues: list
    classifications: list
    pair_real: list
    crossings: list

    def rows(self):
        for v, ev, c, pr in zip(self.values, self.eigenvalues, self.classifications, self.pair_real):
            yield float(v), ev, c, pr


def sweep(model: ModelSpec, parameter: str, lo: float, hi: float, steps: int) -> SweepResult:
    """Linearisation spectrum at the model's canonical equilibrium across a parameter range.

    ``crossings`` holds the parameter values where the real part of the
    leading complex pair changes sign (linear interpolation between rows).
    """
    if not model.has_param(parameter):
        raise ConfigError([("parameter", f"{parameter!r} is not a parameter of {model.kind}")])
    if steps < 2:
        raise ConfigError([("steps", "need at least 2 steps")])
    values = np.linspace(lo, hi, steps)
    # linspace leaves ~1e-17 where the grid should hit 0 exactly
    values[np.abs(values) <= 1e-12 * max(abs(lo), abs(hi))] = 0.0
    eigs, classes, pair = [], [], []
    for v in values:
        spec = model.with_param(parameter, float(v))
        try:
            report = analyze(spec)[0]
        except (SingularEquilibriumError, ValueError) as exc:
            log.warning("%s=%g: %s", parameter, v, exc)
            eigs.append(np.full(model.m, np.nan, dtype=complex))
            classes.append(Classification.DEGENERATE)
            pair.append(None)
            continue
        eigs.append(report.eigenvalues)
        classes.append(report.classification)
        pair.append(conjugate_pair_real_part(report.eigenvalues))
    crossings = []
    sign = [None if p is None else (0 if abs(p) <= ZERO_REAL_TOL else (1 if p > 0 else -1))
            for p in pair]
    for a in range(steps - 1):
        s0, s1 = sign[a], sign[a + 1]
        if s0 is None or s1 is None:
            continue
        if s0 * s1 < 0:
            p0, p1 = pair[a], pair[a + 1]
            crossings.append(float(values[a] - p0 * (values[a + 1] - values[a]) / (p1 - p0)))
    for a in range(1, steps - 1):
        # a row sitting on the crossing itself, with opposite signs either side
        if sign[a] == 0 and sign[a - 1] and sign[a + 1] and sign[a - 1] * sign[a + 1] < 0:
            crossings.append(float(values[a]))
    return SweepResult(parameter, values, eigs, classes, pair, sorted(set(crossings)))
