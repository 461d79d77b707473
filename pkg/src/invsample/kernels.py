"""Scalar kernels underlying every bound: phi, the Hoeffding exponent,
log-binomial coefficients and the negative binomial pmf/cdf.

Probabilities of the negative binomial are handled on the natural-log
scale so that terms like ``p**gamma`` do not underflow for large thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

LogProb = float
"""Natural-log probability: a real number <= 0, or ``-inf``."""

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_EXACT_COMB_LIMIT = 1000
_CDF_TAIL_TOL = 1e-15
_PHI_SERIES_CUTOFF = 0.1


def phi(x: float) -> float:
    """Return ``ln(1 + x) - x / (1 + x)`` for ``|x| < 1``.

    This is the exponential rate shared by all the tail bounds; it is
    positive everywhere on (-1, 1) except at zero.
    """
    if not -1.0 < x < 1.0:
        raise DomainError(f"phi requires |x| < 1, got {x!r}")
    if abs(x) < _PHI_SERIES_CUTOFF:
        # sum_{k>=2} (-1)^k (k-1)/k x^k; the closed form cancels catastrophically here
        return math.fsum((-1) ** k * (k - 1) / k * x**k for k in range(30, 1, -1))
    return math.log1p(x) - x / (1.0 + x)


def hoeffding_m(z: float, mu: float) -> float:
    """Hoeffding's exponent ``ln(mu/z) + (1/z - 1) ln((1-mu)/(1-z))``.

    For i.i.d. samples in [0, 1] with mean ``mu`` the probability that the
    sample mean of ``n`` draws is beyond ``z`` (on the far side from ``mu``)
    is at most ``exp(n * z * hoeffding_m(z, mu))``.
    """
    if not (0.0 < z < 1.0 and 0.0 < mu < 1.0):
        raise DomainError(f"hoeffding_m requires z, mu in (0, 1), got z={z!r}, mu={mu!r}")
    return math.log(mu / z) + (1.0 / z - 1.0) * (math.log1p(-mu) - math.log1p(-z))


def _stirlerr(m: int) -> float:
    # lgamma(m + 1) - [(m + 1/2) ln m - m + ln sqrt(2 pi)]
    if m <= 15:
        return math.lgamma(m + 1.0) - (m + 0.5) * math.log(m) + m - _HALF_LOG_2PI
    inv = 1.0 / m
    inv2 = inv * inv
    return inv * (
        1.0 / 12
        - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (1.0 / 1680 - inv2 / 1188)))
    )


def log_binomial(n: int, k: int) -> float:
    """Natural log of the binomial coefficient ``C(n, k)``.

    Small ``n`` is evaluated exactly from the integer coefficient; larger
    ``n`` uses Stirling remainders with the dominant logarithms arranged so
    no large terms cancel.
    """
    n, k = int(n), int(k)
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"log_binomial requires 0 <= k <= n, got n={n}, k={k}")
    k = min(k, n - k)
    if k == 0:
        return 0.0
    if n <= _EXACT_COMB_LIMIT:
        return math.log(math.comb(n, k))
    r = n - k
    main = k * math.log(n / k) - r * math.log1p(-k / n) + 0.5 * math.log(n / (k * r))
    return main + _stirlerr(n) - _stirlerr(k) - _stirlerr(r) - _HALF_LOG_2PI


@dataclass(frozen=True)
class NegBinomialParams:
    """Number of failures before the ``gamma``-th success with success rate ``p``."""

    gamma: int
    p: float

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 1:
            raise DomainError(f"gamma must be a positive integer, got {self.gamma!r}")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p!r}")
        object.__setattr__(self, "gamma", int(self.gamma))

    @property
    def q(self) -> float:
        return 1.0 - self.p


def negbin_pmf(params: NegBinomialParams, k: int) -> LogProb:
    """Log of ``C(gamma + k - 1, k) p**gamma q**k``."""
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    g = params.gamma
    return log_binomial(g + k - 1, k) + g * math.log(params.p) + k * math.log1p(-params.p)


def negbin_cdf(params: NegBinomialParams, k: int) -> float:
    """``Pr{K <= k}`` by direct summation of the pmf.

    Terms follow the ratio ``q (gamma + i) / (i + 1)`` in log space,
    re-anchored on the exact log pmf every 256 steps, and are summed with
    ``math.fsum`` after scaling by the largest term.  Once the ratio is
    below one the unsummed terms are dominated by a geometric series;
    summation stops when that bound falls under 1e-15 of the largest term.
    """
    if k < 0:
        return 0.0
    g, p = params.gamma, params.p
    log_q = math.log1p(-p)
    log_t = g * math.log(p)
    logs = [log_t]
    top = log_t
    log_tol = math.log(_CDF_TAIL_TOL)
    i = 0
    while i < k:
        i += 1
        if i % 256 == 0:
            log_t = negbin_pmf(params, i)
        else:
            log_t += log_q + math.log((g + i - 1) / i)
        logs.append(log_t)
        top = max(top, log_t)
        ratio = (1.0 - p) * (g + i) / (i + 1)
        if ratio < 1.0:
            tail = log_t + math.log(ratio) - math.log1p(-ratio)
            if tail < top + log_tol:
                break
    if top == -math.inf:
        return 0.0
    total = math.fsum(math.exp(v - top) for v in logs)
    return min(1.0, math.exp(top + math.log(total)))
