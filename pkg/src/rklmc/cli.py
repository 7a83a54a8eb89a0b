"""Command-line entry point.

Exit codes: 0 ok, 1 failed check, 2 usage/config error, 3 trajectory divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks
from .config import ConfigError, load_config
from .experiments import run_experiment
from .potentials import blr_synthesize, make_blr, make_eight_mode_gmm, make_quadratic, make_two_mode_gmm
from .schemes import PRESETS, RkCoefficients, check_order_conditions, compute_kappa1, is_admissible, stepsize_bound
from .simulator import DivergenceError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _coefficients(args) -> RkCoefficients:
    if args.preset and args.coefficients:
        raise UsageError("give either --preset or key=value coefficients, not both")
    if args.preset:
        key = args.preset.lower()
        if key not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        return PRESETS[key]
    if not args.coefficients:
        raise UsageError("no coefficients given")
    text = " ".join(args.coefficients)
    if len(args.coefficients) == 1 and Path(text).is_file():
        text = Path(text).read_text()
    try:
        return RkCoefficients.from_text(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _add_coefficient_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("coefficients", nargs="*", help="alpha=.. beta=.. a11=.. a21=.. a22=.. b1=.. b2=.. (or a file)")
    p.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--mu-prime", type=float, default=0.0)
    p.add_argument("--L1", type=float, default=1.0)
    p.add_argument("--L1-prime", type=float, default=0.0)


def _bound(c, args) -> float:
    try:
        return stepsize_bound(c, args.mu, args.mu_prime, args.L1, args.L1_prime)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_check_order(args) -> int:
    c = _coefficients(args)
    r1, r2, r3 = check_order_conditions(c)
    print(f"r1 = {r1!r}")
    print(f"r2 = {r2!r}")
    print(f"r3 = {r3!r}")
    print(f"kappa1 = {compute_kappa1(c)!r}")
    print(f"stepsize_bound = {_bound(c, args)!r}")
    ok = is_admissible(c)
    print("admissible" if ok else "NOT admissible")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_stepsize_bound(args) -> int:
    c = _coefficients(args)
    print(repr(_bound(c, args)))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, paper_scale=args.paper_scale)
        overrides = {}
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        cfg = replace(cfg, **overrides).validate()
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.paper_scale:
        print("warning: --paper-scale uses full-size ensembles and grids (M = 5000, h_ref = 2^-15); expect long runtimes", file=sys.stderr)

    start = time.perf_counter()
    try:
        report = run_experiment(cfg)
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(cfg.output_dir)
    paths = report.write(out)
    (out / f"{report.kind}_config.ini").write_text(cfg.to_text(), encoding="utf-8")
    for scheme, (slope, _, resid) in report.slopes.items():
        print(f"slope {scheme}: {slope:.4f} (max residual {resid:.3f})")
    for key, value in report.stats.items():
        print(f"{key}: {value:.6g}")
    print(f"wrote {', '.join(str(p) for p in paths)} in {time.perf_counter() - start:.1f}s")
    return EXIT_OK


def cmd_selftest(args) -> int:
    start = time.perf_counter()
    ok = checks.run_selftest(perturb=args.perturb)
    print(f"{'selftest passed' if ok else 'selftest FAILED'} in {time.perf_counter() - start:.1f}s")
    return EXIT_OK if ok else EXIT_CHECK


def _gradcheck_model(args):
    if args.model == "quadratic":
        return make_quadratic(args.d)
    if args.model == "gmm2":
        return make_two_mode_gmm(args.d)
    if args.model == "gmm8":
        return make_eight_mode_gmm()
    return make_blr(blr_synthesize(args.seed, args.n, args.d))


def cmd_gradcheck(args) -> int:
    model = _gradcheck_model(args)
    rng = np.random.default_rng(args.seed)
    scale = 4.0 if args.model == "gmm8" else 1.0
    report = checks.derivative_errors(model, checks.probe_points(rng, model.dimension, args.probes, scale), rng)
    print(f"{model.name} (d={model.dimension}): {checks.describe(report)}")
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rklmc", description="Runge-Kutta Langevin Monte Carlo toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-order", help="order-condition residuals, kappa1 and step-size bound")
    _add_coefficient_args(p)
    p.set_defaults(func=cmd_check_order)

    p = sub.add_parser("stepsize-bound", help="largest provable uniform step size")
    _add_coefficient_args(p)
    p.set_defaults(func=cmd_stepsize_bound)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("config")
    p.add_argument("--paper-scale", action="store_true", help="full-scale M and h_ref instead of desk defaults")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("selftest", help="fast invariant suite")
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("gradcheck", help="analytic derivatives against finite differences")
    p.add_argument("--model", choices=("quadratic", "gmm2", "gmm8", "blr"), default="gmm2")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=100, help="BLR sample count")
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
