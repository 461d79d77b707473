"""Exact coverage analysis for inverse binomial sampling.

With Bernoulli samples and an integer threshold ``gamma`` the number of
failures ``k = n - gamma`` before stopping is negative binomial, so the
probability that an estimator lands strictly within ``eps * p`` of ``p``
is a finite sum of negative binomial terms over an integer window of
``k``.  Writing ``c`` for the estimator's numerator (``gamma`` for the MLE
``gamma / n``, ``gamma - 1`` for the MVUE ``(gamma - 1) / (n - 1)``), the
estimate is ``c / (k + c)`` and the window is::

    c / ((1 + eps) p) - c < k < c / ((1 - eps) p) - c

As a function of ``p`` the coverage is piecewise continuous and jumps
downward exactly at ``p = c / ((1 -/+ eps) m)`` for integers ``m >= c``.
Its minimum over ``[a, b]`` is therefore attained at one of these points
or at an endpoint, which turns the worst case into a finite search.

Window edges sit on integers at those jump points, so every floor/ceil is
settled in exact rational arithmetic whenever the floating-point value is
too close to an integer to trust.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError
from .kernels import NegBinomialParams, negbin_pmf
from .thresholds import PrecisionSpec, explicit_gamma

Real = Union[float, Fraction]

_NEAR_INT = 1e-9
_CHUNK = 1 << 16


class Estimator(str, enum.Enum):
    MLE = "mle"    # gamma / n
    MVUE = "mvue"  # (gamma - 1) / (n - 1)

    def offset(self, gamma: int) -> int:
        return gamma if self is Estimator.MLE else gamma - 1


def _as_estimator(estimator) -> Estimator:
    try:
        return Estimator(estimator)
    except ValueError:
        raise DomainError(f"unknown estimator {estimator!r}") from None


def _check_gamma(gamma, estimator: Estimator) -> int:
    if int(gamma) != gamma:
        raise DomainError(f"gamma must be an integer, got {gamma!r}")
    gamma = int(gamma)
    low = 2 if estimator is Estimator.MVUE else 1
    if gamma < low:
        raise DomainError(f"gamma must be >= {low} for the {estimator.value} estimator")
    return gamma


def _check_epsilon(epsilon):
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")


@dataclass(frozen=True)
class CoverageQuery:
    gamma: int
    epsilon: float
    estimator: Estimator
    a: float
    b: float

    def __post_init__(self):
        est = _as_estimator(self.estimator)
        object.__setattr__(self, "estimator", est)
        object.__setattr__(self, "gamma", _check_gamma(self.gamma, est))
        _check_epsilon(self.epsilon)
        if not 0.0 < self.a <= self.b < 1.0:
            raise DomainError(f"need 0 < a <= b < 1, got [{self.a!r}, {self.b!r}]")


@dataclass(frozen=True)
class CoverageWindow:
    """Integer range ``g <= k <= h`` of failure counts giving a covering estimate."""

    g: int
    h: int

    @property
    def empty(self) -> bool:
        return self.g > self.h


def _floor_ratio(num: Fraction, den: Fraction) -> int:
    q = num / den
    return q.numerator // q.denominator


def _ceil_ratio(num: Fraction, den: Fraction) -> int:
    q = num / den
    return -((-q.numerator) // q.denominator)


def coverage_window(gamma: int, epsilon: float, p: Real, estimator) -> CoverageWindow:
    """Window of failure counts ``k`` for which the estimate lies strictly
    inside ``(p (1 - eps), p (1 + eps))``.  ``p`` may be a ``Fraction`` for
    exact evaluation at a jump point; ``g`` is clamped at zero."""
    est = _as_estimator(estimator)
    gamma = _check_gamma(gamma, est)
    _check_epsilon(epsilon)
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    c = est.offset(gamma)
    eps, pf = Fraction(epsilon), Fraction(p)
    g = _floor_ratio(Fraction(c), (1 + eps) * pf) - c + 1
    h = _ceil_ratio(Fraction(c), (1 - eps) * pf) - c - 1
    return CoverageWindow(max(g, 0), h)


def _window_mass(gamma: int, p: float, g: int, h: int) -> float:
    # sum_{k=g}^{h} C(gamma+k-1, k) p^gamma q^k in log space, fsum after scaling
    if g > h:
        return 0.0
    params = NegBinomialParams(gamma, p)
    log_q = math.log1p(-p)
    log_t = negbin_pmf(params, g)
    logs = [log_t]
    for k in range(g + 1, h + 1):
        if (k - g) % 256 == 0:
            log_t = negbin_pmf(params, k)
        else:
            log_t += log_q + math.log((gamma + k - 1) / k)
        logs.append(log_t)
    top = max(logs)
    if top == -math.inf:
        return 0.0
    return min(1.0, math.exp(top) * math.fsum(math.exp(v - top) for v in logs))


def coverage_probability(gamma: int, epsilon: float, p: Real, estimator) -> float:
    """Exact ``Pr{|estimate - p| < eps p}`` for Bernoulli(p) inverse sampling."""
    w = coverage_window(gamma, epsilon, p, estimator)
    return _window_mass(int(gamma), float(p), w.g, w.h)


# -- vectorised evaluation -------------------------------------------------

def _nb_cdf(gamma: int, k: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(k, p).shape)
    k, p = np.broadcast_arrays(k, p)
    ok = k >= 0
    out[ok] = special.betainc(gamma, k[ok] + 1.0, p[ok])
    return out


def _nb_sf(gamma: int, k: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = np.ones(np.broadcast(k, p).shape)
    k, p = np.broadcast_arrays(k, p)
    ok = k >= 0
    out[ok] = special.betainc(k[ok] + 1.0, gamma, 1.0 - p[ok])
    return out


def window_mass_many(gamma: int, p: np.ndarray, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Vectorised ``Pr{g <= k <= h}`` through the regularized incomplete beta
    function, using whichever tail keeps the subtraction well conditioned."""
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    lower = _nb_cdf(gamma, g - 1.0, p)
    upper_tail = lower > 0.5
    out = np.empty_like(p)
    lo_idx = ~upper_tail
    out[lo_idx] = _nb_cdf(gamma, h[lo_idx], p[lo_idx]) - lower[lo_idx]
    out[upper_tail] = _nb_sf(gamma, g[upper_tail] - 1.0, p[upper_tail]) - _nb_sf(
        gamma, h[upper_tail], p[upper_tail]
    )
    out[g > h] = 0.0
    return np.clip(out, 0.0, 1.0)


def _exact_floor_near(values: np.ndarray, exact_fn) -> np.ndarray:
    # floor of float estimates, settling near-integers with exact_fn(index)
    fl = np.floor(values)
    near = np.abs(values - np.rint(values)) <= _NEAR_INT * np.maximum(1.0, np.abs(values))
    out = fl.astype(np.int64)
    for i in np.flatnonzero(near):
        out[i] = exact_fn(int(i))
    return out


def _exact_ceil_near(values: np.ndarray, exact_fn) -> np.ndarray:
    cl = np.ceil(values)
    near = np.abs(values - np.rint(values)) <= _NEAR_INT * np.maximum(1.0, np.abs(values))
    out = cl.astype(np.int64)
    for i in np.flatnonzero(near):
        out[i] = exact_fn(int(i))
    return out


def windows_many(gamma: int, epsilon: float, ps: np.ndarray, estimator):
    """Vectorised :func:`coverage_window` for float parameters ``ps``."""
    est = _as_estimator(estimator)
    c = est.offset(gamma)
    ps = np.asarray(ps, dtype=float)
    eps = Fraction(epsilon)
    A = c / ((1.0 + epsilon) * ps)
    B = c / ((1.0 - epsilon) * ps)
    fa = _exact_floor_near(A, lambda i: _floor_ratio(Fraction(c), (1 + eps) * Fraction(float(ps[i]))))
    cb = _exact_ceil_near(B, lambda i: _ceil_ratio(Fraction(c), (1 - eps) * Fraction(float(ps[i]))))
    return np.maximum(fa - c + 1, 0), cb - c - 1


def coverage_many(gamma: int, epsilon: float, ps, estimator) -> np.ndarray:
    """Coverage probability at each float parameter in ``ps``."""
    est = _as_estimator(estimator)
    gamma = _check_gamma(gamma, est)
    _check_epsilon(epsilon)
    g, h = windows_many(gamma, epsilon, ps, est)
    return window_mass_many(gamma, ps, g, h)


# -- candidate set ---------------------------------------------------------

def _family_m_range(c: int, factor: Fraction, a: float, b: float):
    # integers m >= c with a < c / (factor m) < b
    lo = _floor_ratio(Fraction(c), factor * Fraction(b)) + 1
    hi = _ceil_ratio(Fraction(c), factor * Fraction(a)) - 1
    return max(lo, c), hi


@dataclass(frozen=True)
class _Family:
    sign: int           # +1: p = c / ((1 + eps) m), -1: p = c / ((1 - eps) m)
    m: np.ndarray       # integer multipliers, ascending (so p descending)
    p: np.ndarray
    g: np.ndarray
    h: np.ndarray
    c: int
    factor: Fraction

    def exact(self, i: int) -> Fraction:
        return Fraction(self.c) / (self.factor * int(self.m[i]))


def _families(query: CoverageQuery):
    c = query.estimator.offset(query.gamma)
    eps = Fraction(query.epsilon)
    num, den = (1 + eps), (1 - eps)   # exact (1 + eps), (1 - eps)
    ratio = num / den
    P, Q = ratio.numerator, ratio.denominator
    out = []
    for sign, factor in ((+1, num), (-1, den)):
        lo, hi = _family_m_range(c, factor, query.a, query.b)
        m = np.arange(lo, hi + 1, dtype=np.int64) if hi >= lo else np.zeros(0, dtype=np.int64)
        mf = m.astype(float)
        p = c / (float(factor) * mf)
        if sign > 0:
            # A = m exactly; B = m (1+eps)/(1-eps)
            g = m - c + 1
            h = _exact_ceil_near(mf * (P / Q), lambda i: -((-int(m[i]) * P) // Q)) - c - 1
        else:
            # B = m exactly; A = m (1-eps)/(1+eps)
            h = m - c - 1
            g = np.maximum(_exact_floor_near(mf * (Q / P), lambda i: (int(m[i]) * Q) // P) - c + 1, 0)
        out.append(_Family(sign, m, p, g, h, c, factor))
    return out


def candidate_points(query: CoverageQuery) -> list:
    """Exact candidate parameters (as ``Fraction``) in ascending order."""
    c = query.estimator.offset(query.gamma)
    eps = Fraction(query.epsilon)
    pts = {Fraction(query.a), Fraction(query.b)}
    for factor in (1 + eps, 1 - eps):
        lo, hi = _family_m_range(c, factor, query.a, query.b)
        pts.update(Fraction(c) / (factor * m) for m in range(lo, hi + 1))
    return sorted(pts)


def candidate_set(query: CoverageQuery) -> np.ndarray:
    """Ascending float array of the endpoints plus both families of jump
    points strictly inside ``(a, b)``; values within 1e-14 of each other
    (in particular of an endpoint) are merged."""
    fams = _families(query)
    interior = np.concatenate([f.p for f in fams])
    pts = np.unique(np.concatenate([[query.a, query.b], interior]))
    if len(pts) > 1:
        keep = np.concatenate([[True], np.diff(pts) > 1e-14 * pts[1:]])
        pts = pts[keep]
        pts[-1] = query.b
    return pts


class MinCoverage(NamedTuple):
    probability: float
    argmin: float
    argmin_exact: Fraction
    """The minimising parameter as an exact rational.  Jump points are where
    the minimum sits, and rounding one to a float can land just past the
    jump, so re-evaluate coverage at this value rather than at ``argmin``."""


def min_coverage(query: CoverageQuery, stop_below: Optional[float] = None) -> MinCoverage:
    """Minimum coverage over ``[a, b]``, evaluated on the candidate set.

    Ties are broken towards the smallest parameter.  With ``stop_below``
    the scan returns as soon as any candidate's coverage is ``<=`` that
    value (the returned minimum is then only an upper bound on the true
    minimum, which is enough to reject a threshold).
    """
    gamma, eps, est = query.gamma, query.epsilon, query.estimator
    ends = np.array([query.a, query.b])
    g_end, h_end = windows_many(gamma, eps, ends, est)
    cov_end = window_mass_many(gamma, ends, g_end, h_end)
    j = _argmin_smallest_p(ends, cov_end)
    best, best_p, best_exact = float(cov_end[j]), float(ends[j]), Fraction(float(ends[j]))
    if stop_below is not None and best <= stop_below:
        return MinCoverage(best, best_p, best_exact)
    for fam in _families(query):
        # walk from small p (large m) upwards: the small-p end is typically worst
        for stop in range(len(fam.m), 0, -_CHUNK):
            start = max(stop - _CHUNK, 0)
            sl = slice(start, stop)
            cov = window_mass_many(gamma, fam.p[sl], fam.g[sl], fam.h[sl])
            i = _argmin_smallest_p(fam.p[sl], cov)
            c_i, p_i = float(cov[i]), float(fam.p[start + i])
            if c_i < best or (c_i == best and p_i < best_p):
                best, best_p, best_exact = c_i, p_i, fam.exact(start + i)
            if stop_below is not None and best <= stop_below:
                return MinCoverage(best, best_p, best_exact)
    return MinCoverage(best, best_p, best_exact)


def _argmin_smallest_p(ps: np.ndarray, cov: np.ndarray):
    idx = np.flatnonzero(cov == cov.min())
    return int(idx[np.argmin(ps[idx])])


def minimum_gamma(epsilon: float, delta: float, a: float, b: float, estimator="mvue") -> int:
    """Smallest integer ``gamma >= 2`` whose worst-case coverage over
    ``[a, b]`` exceeds ``1 - delta``, found by stepping ``gamma`` upward."""
    spec = PrecisionSpec(epsilon, delta)
    est = _as_estimator(estimator)
    target = 1.0 - delta
    limit = 4 * math.ceil(explicit_gamma(spec)) + 10
    for gamma in range(2, limit + 1):
        q = CoverageQuery(gamma, epsilon, est, a, b)
        if min_coverage(q, stop_below=target).probability > target:
            return gamma
    raise ConvergenceError(f"no gamma <= {limit} reaches coverage {target!r}")
