"""Command-line front end.

Subcommands ``embed``, ``recover`` and ``diag`` run an experiment from a JSON
config; ``plotdata`` turns a finished run directory into plot-ready columns.

Exit codes: 0 success, 2 config error, 3 capacity error, 4 partial failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Sequence

from ttqst.harness import ConfigError, ExperimentConfig, PlotDataError, ResultTable, emit_plot_data, run
from ttqst.tt import CapacityError

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_PARTIAL = 0, 2, 3, 4

_SUBCOMMANDS = {"embed": "embedding_sweep", "recover": "recovery_sweep", "diag": "diagnostics"}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttqst", description="Tensor-train state tomography experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, experiment in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=_u64, help="override the config master_seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--out", help="override the config output_dir")
        p.add_argument("--embed-vectors", action="store_true", help="store measurement vectors in run JSON")
    p = sub.add_parser("plotdata", help="write plot data from a finished run")
    p.add_argument("--run", required=True, help="run directory containing manifest.json")
    p.add_argument("--plot", required=True, choices=["fig2", "fig3", "fig4"])
    p.add_argument("--out", required=True, help="directory for the plot-data files")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plotdata":
        try:
            table = ResultTable.load(args.run)
            files = emit_plot_data(table, args.plot, args.out)
        except (OSError, KeyError, PlotDataError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for f in files:
            print(f)
        return EXIT_OK

    try:
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != _SUBCOMMANDS[args.command]:
            raise ConfigError(f"config describes {cfg.experiment!r}, not {_SUBCOMMANDS[args.command]!r}")
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, master_seed=args.seed)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outcome = run(cfg, jobs=args.jobs, embed_vectors=args.embed_vectors, output_dir=args.out)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    for f in outcome.failures:
        print(f"failed: {f}", file=sys.stderr)
    print(f"wrote {len(outcome.table.rows)} rows to {outcome.output_dir / 'results.csv'}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
