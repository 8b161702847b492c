"""pgcsim command line: run / sweep / converge over experiment config files.

The output directory resolves as PGCSIM_OUT > --out > the config's out_dir.
Exit codes: 0 ok, 2 config error, 3 invalid model, 4 gated verification
failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import experiments


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None,
                     help="override master_seed")
    sub.add_argument("--threads", type=int, default=None,
                     help="cap worker threads")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--gate", action="store_true", default=None,
                     help="exit 4 when a verification check fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pgcsim",
        description="Irreversible public-good contribution experiments")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    subs = parser.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser(
        "run", help="run the experiment named in the config"))
    _add_common(subs.add_parser(
        "sweep", help="free-rider ratio over the configured sweep axes"))
    _add_common(subs.add_parser(
        "converge", help="dt / path-count / lattice refinement study"))
    return parser


_FORCED_KIND = {"run": None, "sweep": "free_rider_sweep",
                "converge": "convergence_study"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    out_dir = os.environ.get("PGCSIM_OUT") or args.out
    return experiments.run(args.config, seed=args.seed, threads=args.threads,
                           out_dir=out_dir, gate=args.gate,
                           kind=_FORCED_KIND[args.command])


if __name__ == "__main__":
    sys.exit(main())
