"""
Command line entry point.

    soundzones run <config>         single-frequency Monte Carlo
    soundzones sweep <config>       steady state over the frequency list
    soundzones complexity <config>  operation-count report only
    soundzones compare <config>     CPM vs DPM-D steady-state table

``--jobs`` defaults to $SOUNDZONES_JOBS (else 1); it never changes results.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiment import (ExperimentError, complexity_report, frequency_sweep, run_monte_carlo,
                         split_label, write_results)
from .pm import DivergenceError


def _parser():
    parser = argparse.ArgumentParser(prog="soundzones", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "single-frequency Monte Carlo"),
                       ("sweep", "frequency sweep"),
                       ("complexity", "operation-count report"),
                       ("compare", "CPM vs DPM-D steady-state summary")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="YAML/JSON experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--jobs", type=int, help="worker processes")
    return parser


def _print_complexity(rows, out):
    print(f"{'algorithm':<10}{'system':<13}{'node':>5}{'additions':>16}"
          f"{'multiplications':>18}{'measured (add/mul)':>22}", file=out)
    for r in rows:
        node = "-" if r["node"] < 0 else str(r["node"])
        measured = f"{r['measured_additions']}/{r['measured_multiplications']}"
        print(f"{r['algorithm']:<10}{r['system']:<13}{node:>5}{r['additions']:>16.1f}"
              f"{r['multiplications']:>18.1f}{measured:>22}", file=out)


def _print_compare(rs, out):
    print(f"{'freq_hz':>8}  {'algorithm':<16}{'NMSE dB':>9}{'AC dB':>9}"
          f"{'dNMSE':>9}{'dAC':>9}", file=out)
    for freq in rs.frequencies:
        rows = [r for r in rs.summary if r["freq_hz"] == freq and r["point_set"] == "control"]
        ref = next((r for r in rows if r["label"] == "cpm"), None)
        for r in rows:
            dn = da = ""
            if ref is not None:
                dn = f"{r['nmse_ss_db'] - ref['nmse_ss_db']:9.2f}"
                da = f"{r['ac_ss_db'] - ref['ac_ss_db']:9.2f}"
            print(f"{freq:8.1f}  {r['label']:<16}{r['nmse_ss_db']:9.2f}{r['ac_ss_db']:9.2f}"
                  f"{dn}{da}", file=out)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.out is not None:
            changes["output_dir"] = args.out
        config = config.replace(**changes)
        if args.command == "complexity":
            _print_complexity(complexity_report(config), out)
            return 0
        if args.command == "sweep":
            rs = frequency_sweep(config, jobs=args.jobs)
        else:
            rs = run_monte_carlo(config, jobs=args.jobs)
        if args.command == "compare":
            _print_compare(rs, out)
        if args.command != "compare" or args.out is not None:
            paths = write_results(rs, config.output_dir)
            print(f"wrote {', '.join(str(p) for p in paths.values())}", file=out)
        if rs.failed_bins:
            print(f"{len(rs.failed_bins)} frequency bins failed", file=sys.stderr)
            return 3
        return 0
    except (ConfigError, ExperimentError, DivergenceError, OSError, ValueError) as exc:
        print(f"soundzones: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
