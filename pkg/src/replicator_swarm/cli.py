"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 divergence or stall.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    MODEL_KEYS,
    ModelSpec,
    load_config,
    load_preset,
    preset_names,
    preset_raw,
)
from .errors import ConfigError, DivergenceError, SingularEquilibriumError, StallError, SwarmError
from .experiment import analyze, format_report, run_experiment, sweep
from .tableio import write_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

DEFAULT_PARAMS = {
    "example1": {"k10": 2.0, "k12": 0.2, "k20": 1.5, "k21": 0.4},
    "example2": {"mu": 0.01},
}


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="number of independent trials")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    p.add_argument("--format", choices=("csv", "json"), help="output table format")


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("model", nargs="?", choices=sorted(MODEL_KEYS), help="built-in model kind")
    p.add_argument("--config", type=Path, help="take the model block from a YAML experiment file")
    p.add_argument("--set", action="append", default=[], metavar="NAME=VALUE",
                   help="model parameter, e.g. mu=0.01 or k12=0.2 (repeatable)")
    p.add_argument("--payoff", help="custom payoff matrix as JSON, e.g. [[0,1],[-1,0]]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replicator-swarm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for fid in ("ode", "ssa", "micro"):
        p = sub.add_parser(fid, help=f"run a {fid} experiment from --config")
        _run_flags(p)

    p = sub.add_parser("preset", help="run a shipped figure configuration")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="list preset names and exit")
    p.add_argument("--show", action="store_true", help="print the preset YAML and exit")
    _run_flags(p)

    p = sub.add_parser("analyze", help="equilibrium, eigenvalues and classification")
    _model_flags(p)
    p.add_argument("--point", help="candidate equilibrium as JSON list")

    p = sub.add_parser("sweep", help="classification across a parameter range")
    _model_flags(p)
    p.add_argument("--param", required=True, help="parameter to vary (custom models: 'i,j')")
    p.add_argument("--range", nargs=2, type=float, required=True, metavar=("LO", "HI"))
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--out", type=Path, help="write the table here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def _model_from_args(args) -> ModelSpec:
    if args.config is not None:
        base = load_config(args.config).model
    elif args.model == "custom" or args.payoff:
        if not args.payoff:
            raise ConfigError([("payoff", "custom model needs --payoff")])
        try:
            payoff = json.loads(args.payoff)
        except json.JSONDecodeError as exc:
            raise ConfigError([("payoff", f"not valid JSON: {exc}")]) from exc
        base = _parse_model({"kind": "custom", "payoff": payoff})
    elif args.model:
        base = _parse_model({"kind": args.model, **DEFAULT_PARAMS[args.model]})
    else:
        raise ConfigError([("model", "give a model kind or --config")])
    for item in args.set:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([("--set", f"expected NAME=VALUE, got {item!r}")])
        if not base.has_param(name):
            raise ConfigError([(name, f"not a parameter of {base.kind}")])
        try:
            base = base.with_param(name, float(value))
        except ValueError as exc:
            raise ConfigError([(name, f"not a number: {value!r}")]) from exc
    return base


def _parse_model(block: dict) -> ModelSpec:
    from .config import _model, _Problems

    p = _Problems()
    spec = _model(p, "model", block)
    if p:
        raise ConfigError(p)
    return spec


def _experiment_config(args, fidelity: str | None):
    if args.command == "preset":
        config = load_preset(args.name)
    elif args.config is None:
        raise ConfigError([("--config", "required")])
    else:
        config = load_config(args.config)
    if fidelity is not None and config.fidelity != fidelity:
        raise ConfigError([("fidelity", f"config says {config.fidelity!r}, subcommand is {fidelity!r}")])
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError([("--seed", "must be an unsigned 64-bit integer")])
        changes["seed"] = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError([("--trials", "must be at least 1")])
        changes["trials"] = args.trials
    if args.format is not None:
        changes["fmt"] = args.format
    if args.workers is not None and args.workers < 1:
        raise ConfigError([("--workers", "must be at least 1")])
    return config.replace(**changes) if changes else config


def _cmd_run(args, fidelity):
    config = _experiment_config(args, fidelity)
    out = args.out if args.out is not None else Path("runs") / config.name
    report = run_experiment(config, out, workers=args.workers)
    rmse = report.rmse
    print(f"{config.name}: {config.trials} {config.fidelity} trial(s), seed {config.seed}, "
          f"{report.wall_clock:.2f}s -> {out}")
    for t in report.trials:
        print(f"  trial {t.trial:3d}  rmse [{', '.join(f'{x:.4f}' for x in t.rmse)}]  "
              f"{t.termination}, {t.n_events} events")
    print(f"  mean rmse per task [{', '.join(f'{x:.4f}' for x in rmse.mean(axis=0))}]")
    return EXIT_OK


def _cmd_preset(args):
    if args.list:
        for name in preset_names():
            print(f"{name:10s} {preset_raw(name).get('description', '')}")
        return EXIT_OK
    if not args.name:
        raise ConfigError([("name", "give a preset name or --list")])
    if args.show:
        import yaml

        print(yaml.safe_dump(preset_raw(args.name), sort_keys=False), end="")
        return EXIT_OK
    return _cmd_run(args, None)


def _cmd_analyze(args):
    model = _model_from_args(args)
    point = None
    if args.point:
        try:
            point = np.array(json.loads(args.point), dtype=float)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError([("--point", f"not a JSON list of numbers: {exc}")]) from exc
        if point.shape != (model.m,):
            raise ConfigError([("--point", f"expected {model.m} entries")])
    print(f"model {model.kind} {json.dumps(model.params)}")
    for r in analyze(model, point):
        print(format_report(r))
    return EXIT_OK


def _cmd_sweep(args):
    model = _model_from_args(args)
    res = sweep(model, args.param, args.range[0], args.range[1], args.steps)
    m = model.m
    cols = [args.param, *[f"re_{i + 1}" for i in range(m)], *[f"im_{i + 1}" for i in range(m)],
            "pair_real", "classification"]
    rows = []
    for v, ev, c, pr in res.rows():
        rows.append([v, *np.real(ev), *np.imag(ev), np.nan if pr is None else pr, str(c)])
    meta = {"model": model.kind, "params": model.params, "parameter": args.param,
            "crossings": res.crossings, "tool": f"replicator_swarm {__version__}"}
    if args.out:
        write_table(args.out, meta, cols, rows, args.format)
        print(f"{len(rows)} rows -> {args.out}")
    else:
        print(",".join(cols))
        for row in rows:
            print(",".join(f"{x:.6g}" if isinstance(x, float) else str(x) for x in row))
    if res.crossings:
        print(f"# pair real part changes sign at {args.param} = "
              + ", ".join(f"{x:.6g}" for x in res.crossings), file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("ode", "ssa", "micro"):
            return _cmd_run(args, args.command)
        if args.command == "preset":
            return _cmd_preset(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, StallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SingularEquilibriumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SwarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
