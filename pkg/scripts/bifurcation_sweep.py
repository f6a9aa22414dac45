#!/usr/bin/env python3
"""Sweep the cyclic-model parameter and report where the oscillatory pair crosses.

    python3 scripts/bifurcation_sweep.py --range -0.1 0.1 --steps 41
    python3 scripts/bifurcation_sweep.py --plot sweep.png
"""

import argparse

import numpy as np

from replicator_swarm.config import ModelSpec
from replicator_swarm.experiment import sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--range", nargs=2, type=float, default=(-0.1, 0.1), metavar=("LO", "HI"))
    ap.add_argument("--steps", type=int, default=41)
    ap.add_argument("--plot", help="save the real part of the eigenvalues to this image")
    args = ap.parse_args(argv)

    res = sweep(ModelSpec("example2", {"mu": 0.0}), "mu", *args.range, args.steps)
    print(f"{'mu':>9s}  {'pair re':>10s}  classification")
    for v, ev, c, pr in res.rows():
        print(f"{v:9.4f}  {pr if pr is not None else float('nan'):10.6f}  {c}")
    print("crossings:", ", ".join(f"{x:.6g}" for x in res.crossings) or "none")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        re = np.array([np.real(ev) for _, ev, _, _ in res.rows()])
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(res.values, re, ".-", lw=0.8)
        ax.axhline(0, color="k", lw=0.5)
        ax.set_xlabel("mu")
        ax.set_ylabel("Re(eigenvalue)")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
