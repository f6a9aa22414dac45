#!/usr/bin/env python3
"""Run the shipped presets and plot trajectories against the reference.

    python3 scripts/reproduce_figures.py                 # every preset
    python3 scripts/reproduce_figures.py fig2a fig2b     # a subset
    python3 scripts/reproduce_figures.py --no-plot       # tables only

Needs the ``plot`` extra (matplotlib) unless ``--no-plot`` is given.
"""

import argparse
from pathlib import Path

import numpy as np

from replicator_swarm.config import load_preset, preset_names
from replicator_swarm.experiment import run_experiment


def plot(report, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ref = report.reference
    fig, ax = plt.subplots(figsize=(6, 3.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i in range(ref.m):
        c = colors[i % len(colors)]
        ax.plot(ref.times, ref.states[:, i], color=c, lw=2, ls="--", label=f"reference {i + 1}")
        for t in report.trials:
            ax.plot(t.trajectory.times, t.trajectory.states[:, i], color=c, lw=0.6, alpha=0.5)
    ax.set_xlabel("time")
    ax.set_ylabel("fraction of robots")
    ax.set_title(f"{report.config.name}: mean RMSE {report.mean_rmse:.4f}")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", help="preset names (default: all)")
    ap.add_argument("--out", type=Path, default=Path("runs/figures"))
    ap.add_argument("--workers", type=int)
    ap.add_argument("--no-plot", action="store_true")
    args = ap.parse_args(argv)

    names = args.presets or preset_names()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in names:
        config = load_preset(name)
        report = run_experiment(config, args.out / name, workers=args.workers)
        per_task = np.round(report.rmse.mean(axis=0), 4).tolist()
        print(f"{name:10s} {config.fidelity:6s} trials={config.trials} "
              f"rmse per task {per_task} ({report.wall_clock:.1f}s)")
        if not args.no_plot:
            plot(report, args.out / f"{name}.png")


if __name__ == "__main__":
    main()
