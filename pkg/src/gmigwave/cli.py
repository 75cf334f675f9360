"""Command line entry point: ``gmigwave {validate,run,sweep,report}``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import exp_runner as er

THREADS_ENV = "GMIGWAVE_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("gmigwave")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmigwave", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (("validate", "check a config and exit"), ("run", "run every stage"),
                            ("sweep", "convergence sweep along one axis"),
                            ("report", "print the report of a finished run")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=name != "report", type=Path)
        s.add_argument("--seed", type=int, help="root seed (unsigned 64-bit), overrides the config")
        s.add_argument("--out", type=Path)
        s.add_argument("--threads", type=int)
        if name == "run":
            s.add_argument("--stage-from", default="sample", choices=er.STAGES)
        if name == "sweep":
            s.add_argument("--axis", required=True, choices=er.SWEEP_AXES)
            s.add_argument("--values", required=True, help="comma-separated axis values")
    return p


def _threads(arg):
    env = os.environ.get(THREADS_ENV)
    if env:
        return int(env)
    return arg


def _load(args):
    cfg = er.load_config(args.config)
    if args.seed is not None:
        raw = dict(cfg.raw)
        raw["seeds"] = dict(raw.get("seeds") or {}, root=args.seed)
        cfg = er.parse_config(raw)
    return cfg


def _dispatch(args) -> int:
    if args.command == "report":
        out = args.out or (er.load_config(args.config).out if args.config else None)
        if out is None:
            raise er.ConfigError("report needs --out or --config")
        path = Path(out) / "report.txt"
        if not path.exists():
            raise er.ConfigError(f"no report at {path}")
        sys.stdout.write(path.read_text())
        return EXIT_OK
    cfg = _load(args)
    if args.command == "validate":
        print(f"config ok: hash {cfg.hash}, kind {cfg.kind.tag}, d={cfg.d}, m={cfg.m:g}")
        return EXIT_OK
    if args.command == "run":
        man = er.run(cfg, args.out, stage_from=args.stage_from)
        out = Path(args.out or cfg.out or "gmigwave_out")
        print(f"run ok: {out / 'manifest.json'}")
        for stage, sec in man.timings.items():
            print(f"  {stage}: {sec:.2f} s")
        return EXIT_OK
    values = [float(v) for v in args.values.split(",") if v.strip()]
    out = Path(args.out or cfg.out or "gmigwave_out")
    out.mkdir(parents=True, exist_ok=True)
    rows = er.convergence_sweep(cfg, args.axis, values, out)
    for row in rows:
        print(",".join(str(x) for x in row))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=_threads(args.threads)):
            return _dispatch(args)
    except er.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except er.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except er.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (ArithmeticError, np.linalg.LinAlgError)):
            return EXIT_NUMERIC
        return 1
