"""Command-line entry point.

    navguard run --config FILE [--seed N] [--out CSV] [--metrics JSON]
    navguard montecarlo --config FILE --runs N [--seed-base N] [--workers N] [--report JSON]
    navguard paper-fig6 [--seed N] [--out CSV] [--metrics JSON]

Exit status: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config, paper_fig6_config
from .errors import ConfigInvalid, NavguardError
from .scenario import monte_carlo, run_scenario, write_log_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("navguard")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=True)
        fh.write("\n")


def _single(cfg, args):
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    sim_log, metrics = run_scenario(cfg)
    if args.out:
        write_log_csv(sim_log, args.out)
    if args.metrics:
        _write_json(args.metrics, metrics.as_dict())
    delay = metrics.detection_delay_steps
    print(f"steps={len(sim_log)} seed={cfg.seed} attack_step={metrics.attack_step} "
          f"delay={'-' if delay is None else delay} false_alarms={metrics.false_alarm_count} "
          f"alarms={list(metrics.alarm_times)} position_rmse={metrics.position_rmse:.4f}")


def _cmd_run(args):
    _single(load_config(args.config), args)


def _cmd_paper(args):
    _single(paper_fig6_config(), args)


def _cmd_montecarlo(args):
    cfg = load_config(args.config)
    report = monte_carlo(cfg, args.runs, args.seed_base, workers=args.workers)
    if args.report:
        _write_json(args.report, report.as_dict())
    print(f"runs={report.runs} delay_min={report.delay_min} delay_median={report.delay_median} "
          f"delay_max={report.delay_max} miss_rate={report.miss_rate} "
          f"false_alarm_rate_per_hour={report.false_alarm_rate_per_hour:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navguard",
                                     description="Attack-aware INS/GNSS fusion simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def outputs(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="per-step CSV log")
        p.add_argument("--metrics", help="metrics JSON file")

    p = sub.add_parser("run", help="run one scenario file")
    p.add_argument("--config", required=True)
    outputs(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("montecarlo", help="seeded repetitions of a scenario file")
    p.add_argument("--config", required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", help="aggregate report JSON file")
    p.set_defaults(func=_cmd_montecarlo)

    p = sub.add_parser("paper-fig6", help="canned 10 m spoofing scenario")
    outputs(p)
    p.set_defaults(func=_cmd_paper)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigInvalid as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (NavguardError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
