"""Command-line entry point: ``enscascade {simulate,analyze,verify,defaults}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, RunConfig, format_config, load_config
from .ensemble import EnsembleError
from .localization import CutoffConstantError
from .solver import NumericalFailure

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_SUITE = 0, 1, 2, 3

log = logging.getLogger("enscascade")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="enscascade", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="flat key = value configuration file")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE", help="override a key")

    p = sub.add_parser("simulate", help="integrate a flow and write snapshots plus a manifest")
    common(p)
    p.add_argument("-o", "--output", help="run directory (default: config 'output')")

    p = sub.add_parser("analyze", help="compute the cascade report of a run directory")
    common(p)
    p.add_argument("rundir")
    p.add_argument("-o", "--output", help="report directory (default: the run directory)")

    p = sub.add_parser("verify", help="run the invariant suites")
    common(p)
    p.add_argument("--skip-budget", action="store_true", help="skip the simulation-backed budget suite")
    p.add_argument("-o", "--output", help="write results JSON to this file")

    sub.add_parser("defaults", help="print every configuration default")
    return ap


def _progress(total: int):
    every = max(1, total // 10)

    def report(k, n):
        if k % every == 0 or k == n:
            log.info("step %d/%d", k, n)

    return report


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from . import pipeline

    try:
        if args.command == "defaults":
            sys.stdout.write(format_config(RunConfig()))
            return EXIT_OK
        if args.command == "analyze" and args.config is None and not args.set:
            cfg = None
        else:
            cfg = load_config(args.config, args.set)
        if args.command == "simulate":
            log.info("simulating n=%d, T=%g, %d steps", cfg.n, cfg.T, cfg.steps)
            m = pipeline.cmd_simulate(cfg, args.output, progress=_progress(cfg.steps))
            print(f"wrote {len(m['files'])} snapshots to {args.output or cfg.output}")
            return EXIT_OK
        if args.command == "analyze":
            log.info("analyzing %s", args.rundir)
            rep = pipeline.cmd_analyze(args.rundir, cfg, args.output)
            print(json.dumps({k: rep[k] for k in ("degenerate", "E0", "P0", "sigma0", "assumptions")}, sort_keys=True))
            return EXIT_OK
        if args.command == "verify":
            res = pipeline.cmd_verify(cfg, include_budget=not args.skip_budget)
            text = json.dumps(res, indent=2, sort_keys=True)
            if args.output:
                with open(args.output, "w") as fh:
                    fh.write(text + "\n")
            print(text)
            return EXIT_OK if res["passed"] else EXIT_SUITE
    except (ConfigError, EnsembleError, CutoffConstantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
