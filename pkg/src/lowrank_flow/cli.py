"""Command line entry point ``lowrank-flow``.

Examples::

    lowrank-flow run --experiment matrix-approx --method both --flux increment \\
        --rank 10,20 --dt 5e-3 --t-final 1 --seed 42 --out results/
    lowrank-flow sweep --config sweep.cfg --jobs 4

Exit codes: 0 success, 1 configuration error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, NonFiniteError
from .experiments import coerce_config, load_config, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

# flag -> RunConfig field
_FLAGS = {
    "experiment": "experiment",
    "method": "method",
    "flux": "flux_variant",
    "rank": "ranks",
    "dt": "dts",
    "t_final": "t_final",
    "n": "n",
    "m": "m",
    "seed": "seed",
    "out": "out",
    "store_stride": "store_stride",
    "skew_scale": "skew_scale",
    "dt_ref": "dt_ref",
    "compare_interval": "compare_interval",
    "advection_sign": "advection_sign",
    "jobs": "jobs",
    "record_timing": "record_timing",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--experiment", choices=["matrix-approx", "burgers-single", "burgers-multi"])
    p.add_argument("--method", choices=["ksl", "chart", "euler", "both"])
    p.add_argument("--flux", choices=["increment", "derivative"],
                   help="matrix-approx flux variant")
    p.add_argument("--rank", help="comma separated ranks, e.g. 10,20")
    p.add_argument("--dt", help="comma separated time steps, e.g. 1e-2,1e-3")
    p.add_argument("--t-final", dest="t_final")
    p.add_argument("--n")
    p.add_argument("--m")
    p.add_argument("--seed")
    p.add_argument("--out")
    p.add_argument("--store-stride", dest="store_stride")
    p.add_argument("--skew-scale", dest="skew_scale", choices=["unit", "raw"])
    p.add_argument("--dt-ref", dest="dt_ref", help="Euler reference step (burgers)")
    p.add_argument("--compare-interval", dest="compare_interval",
                   help="time between error comparisons (burgers)")
    p.add_argument("--advection-sign", dest="advection_sign", choices=["-1", "1"])
    p.add_argument("--jobs", help="parallel sweep cells")
    p.add_argument("--record-timing", dest="record_timing", choices=["true", "false"],
                   help="write wall-clock seconds to summary.csv (false writes 0)")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowrank-flow",
                                     description="Dynamical low-rank approximation experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_run_flags(sub.add_parser("run", help="run one configuration"))
    _add_run_flags(sub.add_parser("sweep", help="run a (method, rank, dt) sweep"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep" and not args.config:
        parser.error("sweep requires --config")
    overrides = {field: getattr(args, flag) for flag, field in _FLAGS.items()
                 if getattr(args, flag) is not None}
    try:
        cfg = load_config(args.config, coerce_config(overrides))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for c in report.cells:
        status = f"ABORTED ({c.aborted})" if c.aborted else (
            f"max_error={c.max_error:.3e} final_error={c.final_error:.3e}")
        print(f"{c.experiment} {c.method:5s} r={c.rank:<3d} dt={c.dt:<8g} {status}")
    print(f"wrote {cfg.out}/series.csv and {cfg.out}/summary.csv")
    return EXIT_NUMERICAL if report.aborted else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
