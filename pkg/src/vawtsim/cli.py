"""Command-line entry point: simulate, compare, and plot force curves."""

from __future__ import annotations

import argparse
import sys

from .harness import compare, emit_plot, load_config, run_scenario
from .series import ForceSeries


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="vawtsim",
        description="2D vertical-axis wind turbine force simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write a force CSV")
    sim.add_argument("--config", required=True, help="scenario .cfg file")
    sim.add_argument("--model", choices=("vortex", "alm"),
                     help="override the scenario's model")
    sim.add_argument("--revs", type=int, help="override revolutions")
    sim.add_argument("--steps-per-rev", type=int,
                     help="override time steps per revolution")
    sim.add_argument("--theta-open", type=float,
                     help="vortex model tree opening angle (0 = direct sum)")
    sim.add_argument("--out", required=True, help="output CSV path")

    cmp_ = sub.add_parser("compare", help="azimuth-binned RMS of two force CSVs")
    cmp_.add_argument("a", help="first force CSV")
    cmp_.add_argument("b", help="second force CSV")
    cmp_.add_argument("--bins", type=int, default=72, help="azimuth bins")
    cmp_.add_argument("--out", help="write the per-bin report here")

    plot = sub.add_parser("plot", help="plot force curves from CSVs")
    plot.add_argument("csv", nargs="+", help="force CSVs to plot")
    plot.add_argument("--out", required=True, help="output SVG (or PDF) path")
    return parser


def _simulate(args):
    scenario = load_config(args.config, model=args.model,
                           steps_per_rev=args.steps_per_rev,
                           revolutions=args.revs, theta_open=args.theta_open)
    series = run_scenario(scenario)
    series.save(args.out)
    print(f"{args.out}: {scenario.model} lambda={series.tip_speed_ratio:.2f} "
          f"{len(series)} samples")


def _compare(args):
    report = compare(ForceSeries.load(args.a), ForceSeries.load(args.b),
                     bins=args.bins)
    print(report.summary())
    if args.out:
        report.save(args.out)


def _plot(args):
    out = emit_plot([ForceSeries.load(p) for p in args.csv], args.out)
    print(f"{out} and {out.with_suffix('.csv')}")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"simulate": _simulate, "compare": _compare, "plot": _plot}
    try:
        handler[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"vawtsim {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
