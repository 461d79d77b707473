"""Command-line front end.

Every subcommand is a pure function of its argv.  Results go to stdout as a
JSON envelope (or CSV with ``--format csv``); diagnostics go to stderr.
Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 simulation cap
exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from decimal import Decimal, InvalidOperation
from fractions import Fraction

import numpy as np

from . import __version__
from .bernoulli import (
    CoverageQuery,
    candidate_set,
    coverage_many,
    coverage_probability,
    coverage_window,
    min_coverage,
    minimum_gamma,
)
from .engine import DEFAULT_CAP
from .errors import CapExceededError, ConvergenceError, DomainError, InvSampleError
from .simulation import Bernoulli, ber_demo, parse_distribution, run_batch
from .thresholds import (
    PrecisionSpec,
    dagum_upsilon1,
    explicit_gamma,
    solve_gamma_hat,
    solve_gamma_tilde,
    threshold_report,
)

TOOL = "invsample"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_CAP = 0, 2, 3, 4

_THRESHOLD_FLAGS = ("explicit", "tilde", "hat", "star", "dagum", "cheng")
_THRESHOLD_FIELDS = {
    "explicit": ("explicit_gamma", None),
    "tilde": ("gamma_tilde", "gamma_tilde"),
    "hat": ("gamma_hat", "gamma_hat"),
    "star": ("gamma_star", "gamma_star"),
    "dagum": ("dagum_upsilon1", None),
    "cheng": ("cheng_alpha", "cheng_delta_s"),
}
CURVE_COLUMNS = ("epsilon", "explicit_gamma", "gamma_tilde", "gamma_hat", "dagum_upsilon1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _decimal(text: str) -> Fraction:
    """Parse a decimal literal exactly."""
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}") from None
    if not d.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return Fraction(d)


def _real(text: str) -> float:
    return float(_decimal(text))


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _gamma_or_auto(text: str):
    return "auto" if text == "auto" else _real(text)


# -- output ------------------------------------------------------------------

def _round(value, digits: int):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"non-finite result {value!r}")
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {k: _round(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v, digits) for v in value]
    if isinstance(value, np.generic):
        return _round(value.item(), digits)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _json_text(command, inputs, seed, payload, digits) -> str:
    envelope = {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "input": inputs,
        "seed": seed,
        "payload": payload,
    }
    return json.dumps(_round(envelope, digits), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _csv_text(rows: list[dict], columns, digits) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in _round(row, digits).items()})
    return buf.getvalue()


# -- commands ----------------------------------------------------------------
# Each returns (inputs, seed, payload, csv_rows, csv_columns).

def _spec(args) -> PrecisionSpec:
    return PrecisionSpec(args.epsilon, args.delta)


def cmd_threshold(args):
    spec = _spec(args)
    kinds = [k for k in _THRESHOLD_FLAGS if getattr(args, k)]
    if args.all or not kinds:
        kinds = list(_THRESHOLD_FLAGS)
    report = threshold_report(spec, kinds)
    full = report.to_dict()
    payload = {"epsilon": spec.epsilon, "delta": spec.delta}
    rows = []
    for kind in kinds:
        attr, res_key = _THRESHOLD_FIELDS[kind]
        payload[attr] = full[attr]
        residual = report.residuals.get(res_key) if res_key else None
        rows.append({"kind": kind, "value": full[attr], "residual": residual})
    if "cheng" in kinds:
        payload["cheng_delta_s"] = report.cheng_delta_s
    payload["residuals"] = full["residuals"]
    payload["brackets"] = full["brackets"]
    payload["notes"] = full["notes"]
    if {"tilde", "hat"} <= set(kinds):
        payload["ordering_holds"] = report.ordering_holds()
    inputs = {"epsilon": args.epsilon, "delta": args.delta, "kinds": kinds}
    return inputs, None, payload, rows, ("kind", "value", "residual")


def cmd_min_gamma(args):
    spec = _spec(args)
    gamma = minimum_gamma(spec.epsilon, spec.delta, args.a, args.b, args.estimator)
    worst = min_coverage(CoverageQuery(gamma, spec.epsilon, args.estimator, args.a, args.b))
    payload = {
        "gamma": gamma,
        "worst_p": worst.argmin,
        "worst_p_exact": str(worst.argmin_exact),
        "coverage": worst.probability,
        "target": 1.0 - spec.delta,
    }
    inputs = {"epsilon": args.epsilon, "delta": args.delta, "a": args.a, "b": args.b, "estimator": args.estimator}
    return inputs, None, payload, [payload], ("gamma", "worst_p", "coverage", "target")


def cmd_coverage(args):
    single = args.p is not None
    if single == (args.a is not None or args.b is not None):
        raise DomainError("give either --p or both --a and --b")
    inputs = {"gamma": args.gamma, "epsilon": args.epsilon, "estimator": args.estimator}
    if single:
        p = args.p
        w = coverage_window(args.gamma, args.epsilon, p, args.estimator)
        cov = coverage_probability(args.gamma, args.epsilon, p, args.estimator)
        inputs["p"] = float(p)
        payload = {"p": float(p), "coverage": cov, "window": [w.g, w.h]}
        return inputs, None, payload, [payload], ("p", "coverage")
    if args.a is None or args.b is None:
        raise DomainError("interval mode needs both --a and --b")
    a, b = float(args.a), float(args.b)
    query = CoverageQuery(args.gamma, args.epsilon, args.estimator, a, b)
    pts = candidate_set(query)
    cov = coverage_many(args.gamma, args.epsilon, pts, args.estimator)
    worst = min_coverage(query)
    inputs.update(a=a, b=b)
    rows = [{"p": float(x), "coverage": float(c)} for x, c in zip(pts, cov)]
    minimum = {"p": worst.argmin, "p_exact": str(worst.argmin_exact), "coverage": worst.probability}
    payload = {"candidates": rows, "minimum": minimum}
    return inputs, None, payload, rows, ("p", "coverage")


def _auto_gamma(dist, spec: PrecisionSpec, estimator: str) -> float:
    if isinstance(dist, Bernoulli):
        return float(minimum_gamma(spec.epsilon, spec.delta, dist.p, dist.p, estimator))
    # gamma_hat exceeds gamma_tilde, so it covers both estimators
    return float(math.ceil(solve_gamma_hat(spec)))


_BATCH_COLUMNS = (
    "distribution", "gamma", "estimator", "trials", "successes", "coverage",
    "n_mean", "n_std", "n_min", "n_max", "seed",
)


def _batch_output(inputs, args, result):
    payload = result.to_dict(histogram=args.histogram)
    return inputs, args.seed, payload, [payload], _BATCH_COLUMNS


def cmd_simulate(args):
    spec = _spec(args)
    dist = parse_distribution(args.dist)
    gamma = _auto_gamma(dist, spec, args.estimator) if args.gamma == "auto" else args.gamma
    result = run_batch(dist, gamma, spec, args.estimator, args.trials, args.seed, workers=args.workers, cap=args.cap)
    inputs = {
        "dist": dist.label(), "gamma": args.gamma, "epsilon": args.epsilon, "delta": args.delta,
        "estimator": args.estimator, "trials": args.trials, "cap": args.cap,
    }
    return _batch_output(inputs, args, result)


def cmd_ber(args):
    spec = _spec(args)
    result = ber_demo(args.L, args.rate, spec, args.trials, args.seed, workers=args.workers, cap=args.cap)
    inputs = {
        "L": args.L, "rate": args.rate, "epsilon": args.epsilon, "delta": args.delta,
        "trials": args.trials, "cap": args.cap,
    }
    return _batch_output(inputs, args, result)


def curve_rows(delta: float, eps_min: float, eps_max: float, steps: int) -> list[dict]:
    if not 0.0 < eps_min <= eps_max < 1.0:
        raise DomainError(f"epsilon range must satisfy 0 < min <= max < 1, got [{eps_min}, {eps_max}]")
    grid = np.linspace(eps_min, eps_max, steps) if steps > 1 else np.array([eps_min])
    rows = []
    for eps in grid:
        spec = PrecisionSpec(float(eps), delta)
        rows.append({
            "epsilon": float(eps),
            "explicit_gamma": explicit_gamma(spec),
            "gamma_tilde": solve_gamma_tilde(spec),
            "gamma_hat": solve_gamma_hat(spec),
            "dagum_upsilon1": dagum_upsilon1(spec),
        })
    return rows


def cmd_curves(args):
    rows = curve_rows(args.delta, args.eps_min, args.eps_max, args.steps)
    inputs = {"delta": args.delta, "eps_min": args.eps_min, "eps_max": args.eps_max, "steps": args.steps}
    return inputs, None, {"rows": rows}, rows, CURVE_COLUMNS


# -- parser ------------------------------------------------------------------

def _add_precision(p, epsilon=True, delta=True):
    if epsilon:
        p.add_argument("-e", "--epsilon", type=_real, required=True, help="relative margin of error")
    if delta:
        p.add_argument("-d", "--delta", type=_real, required=True, help="allowed failure probability")


def _add_sim(p, default_trials):
    p.add_argument("--trials", type=_positive_int, default=default_trials)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="worker processes (results do not depend on this)")
    p.add_argument("--cap", type=_positive_int, default=DEFAULT_CAP, help="hard cap on samples per trial")
    p.add_argument("--histogram", action="store_true", help="include the per-trial n histogram")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=TOOL, description="Sample-sum thresholds and inverse sampling experiments.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (json, except csv for curves)")
    common.add_argument("--precision", type=_positive_int, default=6, help="significant digits in output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("threshold", parents=[common], help="sample-sum thresholds")
    _add_precision(p)
    p.add_argument("--all", action="store_true", help="every threshold (the default when no kind is given)")
    for kind in _THRESHOLD_FLAGS:
        p.add_argument(f"--{kind}", action="store_true", help=f"include the {kind} threshold")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("min-gamma", parents=[common], help="smallest integer Bernoulli threshold")
    _add_precision(p)
    p.add_argument("--a", type=_real, required=True, help="lower end of the Bernoulli parameter interval")
    p.add_argument("--b", type=_real, required=True, help="upper end of the Bernoulli parameter interval")
    p.add_argument("--estimator", choices=("mle", "mvue"), default="mvue",
                   help="mle: gamma/n, mvue: (gamma-1)/(n-1)")
    p.set_defaults(func=cmd_min_gamma)

    p = sub.add_parser("coverage", parents=[common], help="exact Bernoulli coverage")
    p.add_argument("--gamma", type=_positive_int, required=True, help="integer threshold on the number of successes")
    _add_precision(p, delta=False)
    p.add_argument("--p", type=_decimal, default=None, help="single Bernoulli parameter (read as an exact decimal)")
    p.add_argument("--a", type=_decimal, default=None, help="interval mode: lower end")
    p.add_argument("--b", type=_decimal, default=None, help="interval mode: upper end")
    p.add_argument("--estimator", choices=("mle", "mvue"), default="mvue",
                   help="mle: gamma/n, mvue: (gamma-1)/(n-1)")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo coverage run")
    p.add_argument("--dist", required=True,
                   help="bernoulli:P | scaled-binomial:L,R | beta:A,B | discrete:X@W,...")
    p.add_argument("--gamma", type=_gamma_or_auto, default="auto",
                   help="sample-sum threshold, or auto to pick one from epsilon and delta")
    _add_precision(p)
    p.add_argument("--estimator", choices=("mle", "mvue"), default="mvue",
                   help="mle: gamma/n, mvue: (gamma-1)/(n-1)")
    _add_sim(p, 20_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ber", parents=[common], help="bit error rate estimation demo")
    p.add_argument("--L", type=int, required=True, help="bits per block")
    p.add_argument("--rate", type=_real, required=True, help="per-bit error rate")
    _add_precision(p)
    _add_sim(p, 5_000)
    p.set_defaults(func=cmd_ber)

    p = sub.add_parser("curves", parents=[common], help="threshold-vs-epsilon curve data")
    _add_precision(p, epsilon=False)
    p.add_argument("--eps-min", type=_real, default=0.01, help="smallest epsilon")
    p.add_argument("--eps-max", type=_real, default=0.5, help="largest epsilon")
    p.add_argument("--steps", type=_positive_int, default=50, help="number of evenly spaced epsilon values")
    p.set_defaults(func=cmd_curves, default_format="csv")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fmt = args.format or getattr(args, "default_format", "json")
    try:
        inputs, seed, payload, rows, columns = args.func(args)
        if fmt == "csv":
            text = _csv_text(rows, columns, args.precision)
        else:
            text = _json_text(args.command, inputs, seed, payload, args.precision)
    except CapExceededError as exc:
        print(f"{TOOL}: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ConvergenceError as exc:
        print(f"{TOOL}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DomainError, InvSampleError, ValueError) as exc:
        print(f"{TOOL}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
