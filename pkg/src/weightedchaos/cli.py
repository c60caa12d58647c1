"""Command-line entry point.

    weightedchaos [run] SUBCOMMAND [CONFIG] [--config PATH] [--set K=V ...]
                  [--threads N] [--store-every K] [--out DIR] [--seed U64]

Exit status: 0 all checks pass, 1 a check failed (report still written),
2 configuration error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from .config import ConfigError, load_config
from .experiments import SUBCOMMANDS
from .kolmogorov import MemoryBudgetError
from .meanfield import EnvelopeError, MassDriftError
from .particles import NumericalAbort
from .reports import emit_report
from .transport import CFLError

log = logging.getLogger("weightedchaos")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weightedchaos", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    p.add_argument("config_pos", nargs="?", metavar="CONFIG")
    p.add_argument("--config", dest="config_opt", metavar="PATH")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                   help="dotted override, e.g. grids.G_x=64 (repeatable)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--store-every", type=int, default=None)
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    path = args.config_opt or args.config_pos
    if path is None:
        log.error("no config given")
        return EXIT_CONFIG
    if args.threads < 1 or (args.store_every is not None and args.store_every < 1):
        log.error("--threads and --store-every must be positive")
        return EXIT_CONFIG
    overrides = list(args.overrides)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            log.error("--seed must fit in an unsigned 64-bit integer")
            return EXIT_CONFIG
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(path, overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out_dir = args.out or cfg.output.dir
    t0 = time.perf_counter()
    try:
        run = SUBCOMMANDS[args.subcommand](cfg, threads=args.threads, store_every=args.store_every)
    except (NumericalAbort, CFLError, MassDriftError, FloatingPointError, EnvelopeError,
            MemoryBudgetError) as exc:
        log.error("numerical abort: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    wall = time.perf_counter() - t0
    try:
        paths = emit_report(args.subcommand, cfg.identity(), run.results, run.checks, run.table,
                            out_dir, cfg.seed, wall, run.extra)
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return EXIT_CONFIG
    for c in run.checks:
        (log.info if c.passed else log.error)(c.message())
    log.info("report %s", paths["json"])
    return EXIT_OK if all(c.passed for c in run.checks) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
