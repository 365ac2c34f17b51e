"""Command-line front end.

Verbs:
  run <spec>           execute an experiment spec (file path or shipped name)
  plot <report> <out>  render a rate table as a log-log SVG
  calibrate <spec>     emit the calibration record for a spec
  list-specs           show the specs shipped with the package

Exit codes: 0 pass, 2 acceptance failure, 3 invalid spec or input,
4 solver stall.
"""

from __future__ import annotations

import argparse

from . import harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpvsc",
        description="Convergence-rate and source-condition experiments for "
                    "L^p Tikhonov regularization.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute an experiment spec")
    p_run.add_argument("spec", help="path to a TOML spec, or a shipped spec name")
    p_run.add_argument("--output-dir", default=None,
                       help="where to write reports (default: spec setting, "
                            "then $LPVSC_OUTPUT_DIR, then the working directory)")

    p_plot = sub.add_parser("plot", help="plot a rate report as SVG")
    p_plot.add_argument("report", help="CSV report written by `run`")
    p_plot.add_argument("out", help="output SVG path")

    p_cal = sub.add_parser("calibrate", help="emit calibration constants")
    p_cal.add_argument("spec", help="path to a TOML spec, or a shipped spec name")
    p_cal.add_argument("--output-dir", default=None)

    sub.add_parser("list-specs", help="list the shipped experiment specs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "run":
        return harness.run(args.spec, args.output_dir)
    if args.verb == "plot":
        return harness.plot(args.report, args.out)
    if args.verb == "calibrate":
        return harness.calibrate(args.spec, args.output_dir)
    for name in harness.list_specs():
        print(name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
