"""Command-line entry point: run / validate / report.

Exit codes: 0 success, 1 an asserted invariant failed (or a run crashed),
2 configuration error.  --threads (or WAVECTRL_THREADS) only schedules
independent sweep entries; per-run results never depend on it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .report import ReportError, render
from .runner import run_with_sweep

log = logging.getLogger("wavectrl")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("WAVECTRL_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavectrl", description=__doc__)
    p.add_argument("--log-level", default="INFO",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.add_argument("--threads", type=int, default=_default_threads(),
                     help="concurrent sweep entries (results are unaffected)")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", type=Path)

    rep = sub.add_parser("report", help="collate a run directory into a plot bundle")
    rep.add_argument("rundir", type=Path)
    rep.add_argument("--out", type=Path, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(f"ok: {cfg.kind} (seed {cfg.seed})")
        return 0

    if args.command == "run":
        try:
            cfg = load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        outdir = args.out or Path(cfg.output_dir or f"runs/{args.config.stem}")
        log.info("running %s into %s", cfg.kind, outdir)
        try:
            outcomes = run_with_sweep(cfg, outdir, max_workers=args.threads)
        except Exception as exc:
            log.error("run failed: %s", exc)
            return 1
        ok = all(o.ok for o in outcomes)
        for o in outcomes:
            for f in o.failures:
                log.error("invariant failed: %s", f)
        log.info("done: %d run(s), ok=%s", len(outcomes), ok)
        return 0 if ok else 1

    if args.command == "report":
        try:
            made = render(args.rundir, args.out)
        except ReportError as exc:
            print(f"report error: {exc}", file=sys.stderr)
            return 1
        for p in made:
            print(p)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
