"""Command-line entry point.

    crais run CONFIG [--seed S] [--out-dir DIR] [--threads T]
    crais benchmark {demo2d,highdim,logistic} [--quick] [--data-dir DIR] ...
    crais tune-then-test CONFIG --m-test M ...

Exit codes: 0 success, 2 invalid config or arguments, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .runner import SUITES, RunAborted, cli_benchmark, cli_run, cli_tune_then_test

log = logging.getLogger("crais")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="run this single seed instead of the config's list")
    p.add_argument("--out-dir", default=None, help="output directory (default: config output_dir)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the transition kernels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crais", description="Annealed importance sampling experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a config over its seeds")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("benchmark", help="run a benchmark suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--quick", action="store_true", help="small particle counts and a single seed")
    p.add_argument("--data-dir", default=None, help="directory holding pima.csv and sonar.csv (logistic suite)")
    _common(p)

    p = sub.add_parser("tune-then-test", help="tune a schedule, interpolate it and test it")
    p.add_argument("config")
    p.add_argument("--m-test", type=int, required=True)
    _common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    seeds = None if args.seed is None else [args.seed]
    try:
        if args.command == "run":
            rows = cli_run(load_config(args.config), args.out_dir, seeds, args.threads)
        elif args.command == "tune-then-test":
            rows = [cli_tune_then_test(load_config(args.config), args.m_test, args.out_dir, seeds, args.threads)]
        else:
            rows = cli_benchmark(args.suite, args.out_dir or "results", seeds, args.threads, args.quick,
                                 args.data_dir)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    for r in rows:
        err = r.get("est_err_mean")
        log.info("%s %s: log Z %.4f, err %s, M %.1f, target evals %.0f", r["target"], r["sampler"],
                 r["log_z_is_mean"], "n/a" if err is None else f"{err:.4f}", r["M_mean"], r["target_evals_mean"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
