"""Command-line entry point ``betaspec``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, parse_config
from .errors import QuadratureError, SolverError
from .experiments import run_experiment

EXIT_PASS, EXIT_MISS, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("betaspec")

# flag name -> config key
_FLAGS = (
    ("beta", "beta"),
    ("n", "n"),
    ("realizations", "realizations"),
    ("seed", "seed"),
    ("out", "out"),
    ("lambda", "lam"),
    ("bins", "bins"),
    ("checkpoints", "checkpoints"),
    ("fit-window", "fit_window"),
    ("central-fraction", "central_fraction"),
    ("quantile-cut", "quantile_cut"),
    ("growth-n", "growth_n"),
    ("det-n", "det_n"),
    ("min-window-ratio", "min_window_ratio"),
    ("workers", "workers"),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="betaspec", description="Tridiagonal beta-ensemble experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="flat JSON config file; flags override its values")
    for flag, dest in _FLAGS:
        # values stay strings here and are validated by parse_config
        run.add_argument(f"--{flag}", dest=dest, default=None, metavar=dest.upper())

    va = sub.add_parser("verify-all", help="run every experiment at its default scale")
    va.add_argument("--seed", default="0")
    va.add_argument("--out", default="betaspec-verify")
    va.add_argument("--workers", default=None)
    return p


def _report(bundle) -> None:
    for c in bundle.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {bundle.config.experiment}:{c.name} measured={c.measured!r} target={c.target!r} tol={c.tolerance!r}")
    print(f"{bundle.config.experiment}: {'PASS' if bundle.passed else 'FAIL'} in {bundle.wall_time:.1f}s -> {bundle.out_dir}")


def _run_one(cfg) -> int:
    try:
        bundle = run_experiment(cfg)
    except (SolverError, QuadratureError, ArithmeticError, FloatingPointError) as e:
        print(f"betaspec: numeric failure in {cfg.experiment}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    _report(bundle)
    return EXIT_PASS if bundle.passed else EXIT_MISS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            flags = {dest: getattr(args, dest) for _, dest in _FLAGS}
            cfgs = [parse_config(args.config, args.experiment, **flags)]
        else:
            cfgs = [
                parse_config(None, name, seed=args.seed, out=str(Path(args.out) / name), workers=args.workers)
                for name in EXPERIMENTS
            ]
    except ConfigError as e:
        print(f"betaspec: {e}", file=sys.stderr)
        return EXIT_USAGE
    codes = [_run_one(cfg) for cfg in cfgs]
    return max(codes)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
