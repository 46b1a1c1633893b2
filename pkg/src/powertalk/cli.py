"""Command-line front end.

    powertalk run --config paper_fig5 [--seed N] [--out DIR]
    powertalk ber-sweep --config sweeps/ber_grid.yaml [--trials N] [--workers K] [--out FILE]
    powertalk mu-sweep --config sweeps/mu_grid.yaml [--trials N] [--workers K] [--out FILE]
    powertalk validate --config FILE

Exit codes: 0 ok, 1 invariant violation during a run, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from .errors import ConfigError
from .sim import config as cfgmod
from .sim.engine import run
from .sim.sweep import load_sweep, run_ber_sweep, run_mu_sweep

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def cmd_run(args) -> int:
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or Path("out") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    log, metrics = run(cfg)
    log.write(out / "events.log")
    (out / "metrics.txt").write_text(metrics.summary())
    (out / "trace.csv").write_text(metrics.trace_csv())
    sys.stdout.write(metrics.summary())
    if metrics.invariant_violations:
        print(f"error: {metrics.invariant_violations} invariant violation(s), see {out / 'events.log'}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _sweep(args, kind: str):
    sweep = load_sweep(args.config)
    if sweep.kind != kind:
        raise ConfigError(f"this is a '{sweep.kind}' sweep, use {sweep.kind}-sweep", field="kind")
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("must be >= 1", field="--trials")
        sweep.trials = args.trials
    if args.seed is not None:
        sweep.seed = args.seed
    return sweep


def cmd_ber_sweep(args) -> int:
    _write(run_ber_sweep(_sweep(args, "ber"), workers=args.workers), args.out)
    return EXIT_OK


def cmd_mu_sweep(args) -> int:
    _write(run_mu_sweep(_sweep(args, "mu"), workers=args.workers), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    p = Path(args.config)
    is_sweep = False
    if p.exists():
        try:
            data = yaml.safe_load(p.read_text())
            is_sweep = isinstance(data, dict) and "axes" in data
        except yaml.YAMLError:
            pass
    if is_sweep:
        s = load_sweep(p)
        print(f"ok: {s.kind} sweep over {', '.join(s.axes)} ({len(s.points())} points)")
    else:
        c = cfgmod.load(args.config)
        print(f"ok: scenario {c.name} ({len(c.grid.units)} units, {c.duration} slots)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="powertalk", description="Power talk authentication simulator for DC microgrids.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, seed=True):
        p.add_argument("--config", required=True, help="scenario/sweep YAML file, or a bundled scenario name")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override the master seed")
        return p

    p = common(sub.add_parser("run", help="simulate one scenario"))
    p.add_argument("--out", default=None, help="output directory (default out/<scenario name>)")
    p.set_defaults(func=cmd_run)
    for verb, func in (("ber-sweep", cmd_ber_sweep), ("mu-sweep", cmd_mu_sweep)):
        p = common(sub.add_parser(verb, help=f"{verb.split('-')[0]} parameter sweep to CSV"))
        p.add_argument("--out", default=None, help="CSV path (default stdout)")
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("--trials", type=int, default=None, help="override trials (ber) or runs (mu) per point")
        p.set_defaults(func=func)
    p = common(sub.add_parser("validate", help="check a scenario or sweep file"), seed=False)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
