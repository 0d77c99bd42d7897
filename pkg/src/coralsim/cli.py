"""Command-line entry point.

Subcommands: ``run <config>``, ``verify <suite> [--filter kind]``,
``sweep <config> --chi <list>``, ``fit <csv> --column <name> --window t0:t1``.
Exit status 0 on success, 1 on validation errors, 2 on runtime failures.
Every command prints a machine-readable ``RESULT key=value ...`` line.
"""

from __future__ import annotations

import argparse
import math
import pathlib
import sys

import numpy as np

from . import config as _config
from . import diagnostics, integrator, output, suites, verification
from .config import ConfigError
from .integrator import IntegrationError

__all__ = ["main"]


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _result(**kv) -> None:
    print("RESULT " + " ".join(f"{k}={_fmt_value(v)}" for k, v in kv.items()))
    sys.stdout.flush()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coralsim",
        description="Pseudo-spectral gamete chemotaxis-fluid simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweeps; never changes results")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized test fields; never affects physics")

    p_run = sub.add_parser("run", help="integrate one configured run")
    p_run.add_argument("config")
    common(p_run)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite", help=f"one of {', '.join(suites.SUITES)} or 'all'")
    p_verify.add_argument("--filter", dest="filter_kind", default="",
                          help="with 'all': only suites whose name contains this")
    common(p_verify)

    p_sweep = sub.add_parser("sweep", help="chi sweep over one config")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--chi", required=True,
                         help="comma-separated increasing chi values")
    common(p_sweep)

    p_fit = sub.add_parser("fit", help="fit a decay exponent to a CSV column")
    p_fit.add_argument("csv")
    p_fit.add_argument("--column", required=True)
    p_fit.add_argument("--window", required=True, help="fit window as t0:t1")
    common(p_fit)
    return parser


def _cmd_run(args) -> int:
    cfg = _config.parse_config_file(args.config)
    outdir = pathlib.Path(args.out or cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.cfg", "w", encoding="utf-8") as fh:
        fh.write(_config.serialize_config(cfg))
    grid = _config.build_grid(cfg)
    sink = output.SnapshotWriter(str(outdir), grid) if cfg.snapshot_interval > 0 else None
    history = integrator.run(cfg, snapshot_sink=sink)
    output.write_timeseries(history, outdir / "timeseries.csv")
    last = history.records[-1]
    _result(
        status="ok", t=last.t, records=len(history.records),
        snapshots=len(history.snapshots), m_e=last.m_e, m_s=last.m_s,
        mass_diff=last.mass_diff, flagged=history.flagged,
        out=str(outdir),
    )
    return 0


def _cmd_verify(args) -> int:
    if args.suite == "all":
        names = [n for n in suites.SUITES if args.filter_kind in n]
        if not names:
            raise ConfigError(f"--filter {args.filter_kind!r} matches no suite")
    else:
        if args.suite not in suites.SUITES:
            raise ConfigError(
                f"unknown suite {args.suite!r}; have {', '.join(suites.SUITES)} or 'all'")
        names = [args.suite]
    all_passed = True
    for name in names:
        res = suites.run_suite(name, threads=args.threads)
        for line in res.lines:
            print(line)
        metrics = {k: v for k, v in res.metrics.items()
                   if isinstance(v, (int, float)) and "[" not in k}
        _result(suite=name, passed=res.passed, **metrics)
        all_passed = all_passed and res.passed
    return 0 if all_passed else 2


def _cmd_sweep(args) -> int:
    cfg = _config.parse_config_file(args.config)
    try:
        chis = tuple(float(c) for c in args.chi.split(",") if c.strip() != "")
    except ValueError:
        raise ConfigError(f"--chi expects comma-separated numbers, got {args.chi!r}")
    rows = verification.chi_sweep(cfg, chis, threads=max(1, args.threads))
    outdir = pathlib.Path(args.out or cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("chi,m_s_end,m_e_end,plateau,rel_change_s,rel_change_e,mass_diff_drift\n")
        for r in rows:
            fh.write(",".join([
                repr(r.chi), repr(r.m_s_end), repr(r.m_e_end),
                "1" if r.plateau else "0",
                repr(r.rel_change_s), repr(r.rel_change_e),
                repr(r.mass_diff_drift),
            ]) + "\n")
    _result(
        status="ok",
        chi_list=";".join(f"{r.chi:g}" for r in rows),
        m_e_end=";".join(repr(r.m_e_end) for r in rows),
        m_s_end=";".join(repr(r.m_s_end) for r in rows),
        plateau=";".join("1" if r.plateau else "0" for r in rows),
        out=str(outdir),
    )
    return 0


def _cmd_fit(args) -> int:
    try:
        t0s, t1s = args.window.split(":", 1)
        t0, t1 = float(t0s), float(t1s)
    except ValueError:
        raise ConfigError(f"--window expects t0:t1, got {args.window!r}")
    try:
        ts, vs = output.read_timeseries_column(args.csv, args.column)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc))
    fit = diagnostics.decay_fit((ts, vs), t0, t1)
    n = int(np.sum((ts >= t0) & (ts <= t1)))
    _result(exponent=fit.exponent, constant=fit.constant,
            residual=fit.residual, n=n, column=args.column)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    handlers = {"run": _cmd_run, "verify": _cmd_verify,
                "sweep": _cmd_sweep, "fit": _cmd_fit}
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, OSError, ValueError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
