"""Command line entry point.

    mcflab simulate --config scenario.json [--out DIR] [--dump-fields]
    mcflab sweep    --config scenario.json [--out DIR] [--threads K]
    mcflab verify   --config scenario.json [--out DIR] [--threads K]
    mcflab report   --config scenario.json [--out DIR]

Exit codes: 0 all checks pass (and every must-detect row detects),
1 at least one check failed, 2 configuration or I/O problems.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, RefusalError
from .potential import STANDARD_WELL
from .scenarios import load_scenario


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mcflab",
        description="Phase-field mean curvature flow laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, blurb in (
            ("simulate", "run the first eps of a scenario, write snapshots"),
            ("sweep", "run every eps of a scenario"),
            ("verify", "run the scenario and evaluate all configured checks"),
            ("report", "summarize an existing report.csv, render figures")):
        p = sub.add_parser(cmd, help=blurb)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker count for eps sweeps (default: scenario)")
        p.add_argument("--dump-fields", action="store_true",
                       help="write binary snapshots at the cadence")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, RefusalError, FileNotFoundError) as exc:
        print(f"mcflab: error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    from . import runner
    from . import report as report_mod

    cfg = load_scenario(args.config)
    outdir = args.out or cfg.output
    threads = max(1, args.threads if args.threads is not None else cfg.threads)
    if args.command == "simulate":
        if cfg.analytic_only:
            raise ConfigError("scenario has no eps runs to simulate")
        dump_dir = f"{outdir}/fields" if (args.dump_fields or cfg.dump_fields) else None
        traj = runner.run_one(cfg, 0, STANDARD_WELL, dump_dir)
        path = runner.write_energy_log(outdir, cfg.name, cfg.epsilons[0], traj)
        print(f"simulated {cfg.name} eps={cfg.epsilons[0]:g}: "
              f"{len(traj.snapshots)} snapshots, energy log {path}")
        return 0
    if args.command == "sweep":
        if cfg.analytic_only:
            raise ConfigError("scenario has no eps runs to sweep")
        dump_dir = f"{outdir}/fields" if (args.dump_fields or cfg.dump_fields) else None
        trajs = runner.run_sweep(cfg, threads=threads, dump_dir=dump_dir)
        for eps in sorted(trajs, reverse=True):
            path = runner.write_energy_log(outdir, cfg.name, eps, trajs[eps])
            print(f"swept {cfg.name} eps={eps:g}: energy log {path}")
        return 0
    if args.command == "verify":
        report, csv_path = runner.verify_scenario(
            cfg, threads=threads, outdir=outdir,
            dump_fields=args.dump_fields)
        n_fail = len(report.failures())
        print(f"verified {cfg.name}: {len(report.rows)} rows, "
              f"{n_fail} failed -> {csv_path}")
        for row in report.failures():
            print(f"  FAIL {row.check} eps={row.epsilon:g} "
                  f"value={row.value:g} target={row.target:g}")
        return 0 if report.all_passed else 1
    if args.command == "report":
        summary_path, figures, ok = report_mod.render_report(outdir)
        with open(summary_path) as fh:
            print(fh.read(), end="")
        print(f"figures: {', '.join(figures)}")
        return 0 if ok else 1
    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
