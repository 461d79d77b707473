"""Sample-sum thresholds for inverse sampling.

Three tail-bound functions bound the probability that the relative error
of the stopped estimate reaches ``epsilon``:

* ``q_tilde``     -- estimator ``gamma / n`` for any variable in [0, 1];
* ``q_hat``       -- estimator ``(gamma - 1) / (n - 1)`` for any variable in [0, 1];
* ``q_bernoulli`` -- estimator ``gamma / n`` for Bernoulli variables.

Each is strictly decreasing in ``gamma``, so the threshold where it crosses
``delta`` is found by bisection.  All three are evaluated through the rate
function ``phi`` (``Q = exp(-gamma phi(eps)) + exp(-gamma phi(-x))`` with
``x`` the auxiliary precision of the respective estimator) instead of the
power form, which overflows for large ``gamma``.

The thresholds of Dagum et al. and of Cheng are included for comparison
curves only.  Cheng's value carries no proven coverage guarantee.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, RootNotBracketedError
from .kernels import phi

RESIDUAL_RTOL = 1e-10
MAX_BISECTIONS = 200
CHENG_RESIDUAL = 1e-12
CHENG_NOTE = "comparison only - guarantee unproven"
_TWO_LN2_MINUS_1 = 2.0 * math.log(2.0) - 1.0


@dataclass(frozen=True)
class PrecisionSpec:
    """Relative margin ``epsilon`` and risk ``delta``, both in (0, 1)."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta!r}")


@dataclass(frozen=True)
class AuxiliaryPrecision:
    """Shrunken margins used by the upper tails of ``q_hat`` (eta) and ``q_tilde`` (zeta)."""

    eta: float
    zeta: float
    gamma: float


def _check_epsilon(epsilon):
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")


def _zeta(epsilon, gamma):
    # 1/(1-eps) = 1/(1-zeta) + 1/gamma
    return (gamma * epsilon - 1.0 + epsilon) / (gamma - 1.0 + epsilon)


def _eta(epsilon, gamma):
    return (epsilon * gamma - 1.0) / (gamma - 1.0)


def auxiliary_precision(epsilon: float, gamma: float) -> AuxiliaryPrecision:
    """Return ``(eta, zeta)`` for ``gamma > 1/epsilon``; then ``0 < eta < zeta < epsilon``."""
    _check_epsilon(epsilon)
    if not gamma > 1.0 / epsilon:
        raise DomainError(f"gamma must exceed 1/epsilon = {1.0 / epsilon!r}, got {gamma!r}")
    return AuxiliaryPrecision(eta=_eta(epsilon, gamma), zeta=_zeta(epsilon, gamma), gamma=gamma)


def q_tilde(epsilon: float, gamma: float) -> float:
    """Risk bound for the estimator ``gamma / n``, defined for ``gamma > (1 - eps) / eps``."""
    _check_epsilon(epsilon)
    if not gamma > (1.0 - epsilon) / epsilon:
        raise DomainError(f"q_tilde requires gamma > (1-eps)/eps, got gamma={gamma!r}")
    zeta = _zeta(epsilon, gamma)
    return math.exp(-gamma * phi(epsilon)) + math.exp(-gamma * phi(-zeta))


def q_hat(epsilon: float, gamma: float) -> float:
    """Risk bound for the estimator ``(gamma - 1) / (n - 1)``, defined for ``gamma > 1 / eps``."""
    _check_epsilon(epsilon)
    if not gamma > 1.0 / epsilon:
        raise DomainError(f"q_hat requires gamma > 1/eps, got gamma={gamma!r}")
    eta = _eta(epsilon, gamma)
    return math.exp(-gamma * phi(epsilon)) + math.exp(-gamma * phi(-eta))


def q_bernoulli(epsilon: float, gamma: float) -> float:
    """Risk bound for ``gamma / n`` under Bernoulli sampling, defined for ``gamma > 0``."""
    _check_epsilon(epsilon)
    if not gamma > 0.0:
        raise DomainError(f"q_bernoulli requires gamma > 0, got {gamma!r}")
    return math.exp(-gamma * phi(epsilon)) + math.exp(-gamma * phi(-epsilon))


def explicit_gamma(spec: PrecisionSpec) -> float:
    """Closed-form sufficient threshold ``(1+eps) ln(2/delta) / ((1+eps) ln(1+eps) - eps)``."""
    return math.log(2.0 / spec.delta) / phi(spec.epsilon)


def dagum_upsilon1(spec: PrecisionSpec) -> float:
    """Dagum et al.'s threshold ``1 + 4 (e - 2) (1 + eps) ln(2/delta) / eps**2``."""
    eps = spec.epsilon
    return 1.0 + 4.0 * (math.e - 2.0) * (1.0 + eps) * math.log(2.0 / spec.delta) / eps**2


def quadratic_gamma(spec: PrecisionSpec) -> float:
    """The intermediate bound ``(1 + eps) ln(2/delta) / ((2 ln 2 - 1) eps**2)``."""
    eps = spec.epsilon
    return (1.0 + eps) * math.log(2.0 / spec.delta) / (_TWO_LN2_MINUS_1 * eps**2)


@dataclass(frozen=True)
class Solution:
    value: float
    residual: float
    bracket: tuple
    iterations: int


def _bisect_decreasing(
    fn: Callable[[float], float], target: float, lo: float, hi: float, name: str
) -> Solution:
    """Bisection for ``fn(x) = target`` with ``fn`` strictly decreasing on ``[lo, hi]``.

    The bracket is halved until it cannot shrink any further in floating
    point, then the endpoint with the smaller residual is returned.  Near
    ``epsilon = 0.5`` and small ``delta`` the three thresholds differ only
    in their twelfth significant digit, so stopping at the residual
    tolerance alone would not resolve their ordering.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    if not f_lo > target > f_hi:
        raise ConvergenceError(
            f"{name}: target {target!r} not bracketed by [{lo!r}, {hi!r}] "
            f"(values {f_lo!r}, {f_hi!r})"
        )
    tol = RESIDUAL_RTOL * target
    bracket = (lo, hi)
    for it in range(1, MAX_BISECTIONS + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fn(mid)
        if f_mid == target:
            lo = hi = mid
            f_lo = f_hi = f_mid
            break
        if f_mid > target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    else:
        raise ConvergenceError(f"{name}: bracket did not collapse in {MAX_BISECTIONS} steps")
    value, f_val = (lo, f_lo) if abs(f_lo - target) <= abs(f_hi - target) else (hi, f_hi)
    residual = abs(f_val - target)
    if residual > tol:
        raise ConvergenceError(f"{name}: residual {residual!r} above tolerance {tol!r}")
    return Solution(value, residual, bracket, it)


def _open_endpoint(x):
    return x * (1.0 + 1e-9) + 1e-9


def _gamma_tilde_solution(spec: PrecisionSpec) -> Solution:
    eps = spec.epsilon
    return _bisect_decreasing(
        lambda g: q_tilde(eps, g),
        spec.delta,
        _open_endpoint((1.0 - eps) / eps),
        explicit_gamma(spec),
        "gamma_tilde",
    )


def _gamma_hat_solution(spec: PrecisionSpec) -> Solution:
    eps = spec.epsilon
    return _bisect_decreasing(
        lambda g: q_hat(eps, g),
        spec.delta,
        _open_endpoint(1.0 / eps),
        explicit_gamma(spec),
        "gamma_hat",
    )


def bernoulli_lower_bound(spec: PrecisionSpec) -> float:
    """Lower end of the bracket known to contain ``gamma_star``."""
    eps, delta = spec.epsilon, spec.delta
    return max(math.log(1.0 / delta) / phi(eps), math.log(2.0 / delta) / phi(-eps))


def _gamma_star_solution(spec: PrecisionSpec) -> Solution:
    eps = spec.epsilon
    lo = bernoulli_lower_bound(spec)
    if not q_bernoulli(eps, lo) > spec.delta:
        lo = 1e-9
    return _bisect_decreasing(
        lambda g: q_bernoulli(eps, g), spec.delta, lo, explicit_gamma(spec), "gamma_star"
    )


def solve_gamma_tilde(spec: PrecisionSpec) -> float:
    """Unique ``gamma`` with ``q_tilde(eps, gamma) == delta`` (relative residual <= 1e-10)."""
    return _gamma_tilde_solution(spec).value


def solve_gamma_hat(spec: PrecisionSpec) -> float:
    """Unique ``gamma`` with ``q_hat(eps, gamma) == delta`` (relative residual <= 1e-10)."""
    return _gamma_hat_solution(spec).value


def solve_gamma_star(spec: PrecisionSpec) -> float:
    """Unique ``gamma`` with ``q_bernoulli(eps, gamma) == delta`` (relative residual <= 1e-10)."""
    return _gamma_star_solution(spec).value


def cheng_lhs(epsilon: float, delta_s: float) -> float:
    """Left-hand side of Cheng's equation for the auxiliary risk ``delta_s``."""
    h = 0.5 * delta_s
    e2 = (1.0 + epsilon) / (1.0 + 2.0 * epsilon)
    e3 = (1.0 + epsilon) / (1.0 + 3.0 * epsilon)
    inner = (1.0 - delta_s) + (1.0 - 2.0 * h**e2) * h + (1.0 - 2.0 * h**e3) * h * h
    return (1.0 - h) * inner


def _cheng_scan_grid():
    left = np.geomspace(1e-15, 0.5, 400)
    right = 1.0 - np.geomspace(0.5, 1e-15, 400)[1:]
    return np.concatenate([left, right])


def solve_cheng_delta_s(spec: PrecisionSpec) -> Solution:
    """Root of ``cheng_lhs(eps, x) = delta`` on (1e-15, 1 - 1e-15).

    The equation is scanned on a log-spaced grid refined towards both
    ends of the interval; exactly one sign change is required.
    """
    eps, delta = spec.epsilon, spec.delta
    grid = _cheng_scan_grid()
    vals = np.array([cheng_lhs(eps, x) - delta for x in grid])
    signs = np.sign(vals)
    changes = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    exact = np.flatnonzero(vals == 0.0)
    if len(exact) == 1 and len(changes) == 0:
        x = float(grid[exact[0]])
        return Solution(x, 0.0, (x, x), 0)
    if len(changes) != 1 or len(exact) > 0:
        raise RootNotBracketedError(
            f"cheng: expected one sign change on (1e-15, 1-1e-15), found {len(changes)}"
        )
    lo, hi = float(grid[changes[0]]), float(grid[changes[0] + 1])
    root, info = brentq(
        lambda x: cheng_lhs(eps, x) - delta, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
        maxiter=MAX_BISECTIONS, full_output=True,
    )
    residual = abs(cheng_lhs(eps, root) - delta)
    if residual > CHENG_RESIDUAL:
        raise ConvergenceError(f"cheng: residual {residual!r} above {CHENG_RESIDUAL!r}")
    return Solution(root, residual, (lo, hi), info.iterations)


def cheng_alpha(spec: PrecisionSpec) -> float:
    """Cheng's reduced threshold ``ln(2/delta_s) / phi(eps)`` (comparison only)."""
    delta_s = solve_cheng_delta_s(spec).value
    return math.log(2.0 / delta_s) / phi(spec.epsilon)


THRESHOLD_KINDS = ("explicit", "tilde", "hat", "star", "dagum", "cheng")


@dataclass
class ThresholdReport:
    """Every threshold computed for one precision spec, with solver metadata."""

    epsilon: float
    delta: float
    explicit_gamma: Optional[float] = None
    gamma_tilde: Optional[float] = None
    gamma_hat: Optional[float] = None
    gamma_star: Optional[float] = None
    dagum_upsilon1: Optional[float] = None
    cheng_alpha: Optional[float] = None
    cheng_delta_s: Optional[float] = None
    residuals: dict = field(default_factory=dict)
    brackets: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def ordering_holds(self) -> bool:
        """Check ``(1-eps) hat < tilde < hat < explicit`` and ``star < tilde`` where present."""
        eps = self.epsilon
        ok = True
        if None not in (self.gamma_tilde, self.gamma_hat, self.explicit_gamma):
            ok &= (1.0 - eps) * self.gamma_hat < self.gamma_tilde < self.gamma_hat
            ok &= self.gamma_hat < self.explicit_gamma
        if None not in (self.gamma_star, self.gamma_tilde):
            ok &= self.gamma_star < self.gamma_tilde
        if None not in (self.explicit_gamma, self.dagum_upsilon1):
            ok &= self.explicit_gamma < self.dagum_upsilon1
        return bool(ok)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["brackets"] = {k: list(v) for k, v in self.brackets.items()}
        return out


def threshold_report(spec: PrecisionSpec, kinds=THRESHOLD_KINDS) -> ThresholdReport:
    """Compute the requested thresholds (any of ``THRESHOLD_KINDS``)."""
    unknown = set(kinds) - set(THRESHOLD_KINDS)
    if unknown:
        raise ValueError(f"unknown threshold kinds: {sorted(unknown)}")
    report = ThresholdReport(epsilon=spec.epsilon, delta=spec.delta)
    if "explicit" in kinds:
        report.explicit_gamma = explicit_gamma(spec)
    if "dagum" in kinds:
        report.dagum_upsilon1 = dagum_upsilon1(spec)
    solvers = {
        "tilde": ("gamma_tilde", _gamma_tilde_solution),
        "hat": ("gamma_hat", _gamma_hat_solution),
        "star": ("gamma_star", _gamma_star_solution),
    }
    for kind, (attr, solve) in solvers.items():
        if kind in kinds:
            sol = solve(spec)
            setattr(report, attr, sol.value)
            report.residuals[attr] = sol.residual
            report.brackets[attr] = sol.bracket
    if "cheng" in kinds:
        sol = solve_cheng_delta_s(spec)
        report.cheng_delta_s = sol.value
        report.cheng_alpha = math.log(2.0 / sol.value) / phi(spec.epsilon)
        report.residuals["cheng_delta_s"] = sol.residual
        report.brackets["cheng_delta_s"] = sol.bracket
        report.notes["cheng_alpha"] = CHENG_NOTE
    return report
