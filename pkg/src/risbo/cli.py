"""Command line entry point.

    risbo run <config> [--scenario S] [--seed n] [--realizations R] [--out path] [--workers n]
    risbo validate <config>

Log verbosity comes from ``RISBO_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .experiments import (SCENARIOS, ConfigError, results_to_csv, default_workers, emit_results,
                          load_config, run_scenario)

LOG_ENV = "RISBO_LOG_LEVEL"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risbo", description="CSI-free RIS design experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write a CSV table")
    run.add_argument("config", help="TOML experiment file")
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--seed", type=int)
    run.add_argument("--realizations", type=int)
    run.add_argument("--out", help="CSV destination (default: config 'out', else stdout)")
    run.add_argument("--workers", type=int, help="worker processes (default: RISBO_WORKERS or 1)")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    return p


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: scenario {cfg.scenario}, {len(cfg.x_values())} x-axis points, "
                  f"{cfg.realizations} realizations")
            return 0
        workers = args.workers
        if workers is None and os.environ.get("RISBO_WORKERS"):
            workers = default_workers()
        cfg = load_config(args.config, scenario=args.scenario, seed=args.seed,
                          realizations=args.realizations, out=args.out, workers=workers)
        table = run_scenario(cfg)
        if cfg.out:
            emit_results(table, cfg.out)
        else:
            sys.stdout.write(results_to_csv(table))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
