"""The inverse sampling stopping rule and bounds on the stopped sample size.

Samples in [0, 1] are consumed until their running sum first reaches the
threshold ``gamma``; the sample count ``n`` at that moment gives the two
estimators ``gamma / n`` and ``(gamma - 1) / (n - 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CapExceededError, DomainError, StoppingError, StreamExhaustedError

DEFAULT_CAP = 10**8


@dataclass(frozen=True)
class EstimateReport:
    mu_tilde: float
    mu_hat: float | None
    n: int
    gamma: float


@dataclass
class StoppingState:
    """Running count and sum of one inverse-sampling run.

    Samples must lie in [0, 1].  The state is single-owner: feed it from
    one place at a time.
    """

    gamma: float
    count: int = 0
    sample_sum: float = 0.0
    stopped: bool = False

    def __post_init__(self):
        if not self.gamma > 1.0 or not math.isfinite(self.gamma):
            raise DomainError(f"gamma must be a finite real > 1, got {self.gamma!r}")

    def ingest(self, sample: float) -> "StoppingState":
        if self.stopped:
            raise StoppingError("cannot ingest after the stopping rule has fired")
        if not 0.0 <= sample <= 1.0:
            raise DomainError(f"sample {sample!r} outside [0, 1]")
        self.count += 1
        self.sample_sum += sample
        if self.sample_sum >= self.gamma:
            self.stopped = True
        return self

    def ingest_block(self, samples) -> int:
        """Feed samples in order until stopping; return how many were consumed.

        The running sums are accumulated left to right exactly as repeated
        :meth:`ingest` calls would, so both paths stop at the same count.
        """
        if self.stopped:
            raise StoppingError("cannot ingest after the stopping rule has fired")
        block = np.asarray(samples, dtype=float)
        if block.size == 0:
            return 0
        if block.min() < 0.0 or block.max() > 1.0:
            raise DomainError("block contains samples outside [0, 1]")
        sums = np.cumsum(np.concatenate(([self.sample_sum], block)))[1:]
        hit = np.flatnonzero(sums >= self.gamma)
        used = int(hit[0]) + 1 if hit.size else block.size
        self.count += used
        self.sample_sum = float(sums[used - 1])
        self.stopped = bool(hit.size)
        return used

    def estimates(self) -> EstimateReport:
        if not self.stopped:
            raise StoppingError("estimates are only defined once stopped")
        n = self.count
        mu_hat = (self.gamma - 1.0) / (n - 1) if n >= 2 else None
        return EstimateReport(mu_tilde=self.gamma / n, mu_hat=mu_hat, n=n, gamma=self.gamma)


def run_stream(gamma: float, stream: Iterable[float], cap: int = DEFAULT_CAP) -> StoppingState:
    """Drive a fresh state over ``stream`` until it stops.

    Raises :class:`StreamExhaustedError` if the stream ends first and
    :class:`CapExceededError` if ``cap`` samples pass without stopping.
    """
    state = StoppingState(gamma)
    for x in stream:
        if state.count >= cap:
            raise CapExceededError(cap)
        state.ingest(x)
        if state.stopped:
            return state
    raise StreamExhaustedError(state.count, state.sample_sum, gamma)


def estimate(gamma: float, n, estimator: str):
    """``gamma / n`` (``"mle"``) or ``(gamma - 1) / (n - 1)`` (``"mvue"``), elementwise."""
    n = np.asarray(n, dtype=float)
    if estimator == "mle":
        return gamma / n
    if estimator == "mvue":
        return (gamma - 1.0) / (n - 1.0)
    raise DomainError(f"unknown estimator {estimator!r}")


# -- sample-size bounds ------------------------------------------------------

def _xlogx_ratio(x, num, den):
    # x * ln(num / den) with the x = 0 limit
    return 0.0 if x == 0 else x * (math.log(num) - math.log(den))


def _clamped(log_bound: float) -> float:
    return math.exp(min(log_bound, 0.0))


def _check_unit(name, v):
    if not 0.0 < v < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {v!r}")


def sample_size_upper_tail(gamma: float, mu: float, rho: float) -> float:
    """Bound on ``Pr{n >= gamma (1 + rho) / mu}`` for any variable in [0, 1]."""
    _check_unit("mu", mu)
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if not rho > mu / gamma:
        raise DomainError(f"rho must exceed mu/gamma = {mu / gamma!r}, got {rho!r}")
    t = 1.0 + rho - mu / gamma
    log_b = (gamma / mu) * (t * math.log(t) + (t - mu) * (math.log1p(-mu) - math.log(t - mu)))
    return _clamped(log_b)


def sample_size_lower_tail(gamma: float, mu: float, rho: float) -> float:
    """Bound on ``Pr{n <= gamma (1 - rho) / mu}`` for ``0 < rho < 1 - mu``."""
    _check_unit("mu", mu)
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if not 0.0 < rho < 1.0 - mu:
        raise DomainError(f"rho must lie in (0, 1 - mu), got {rho!r}")
    s = 1.0 - rho
    log_b = (gamma / mu) * (s * math.log(s) + _xlogx_ratio(s - mu, 1.0 - mu, s - mu))
    return _clamped(log_b)


class Side(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


def bernoulli_sample_size_tails(gamma: int, p: float, rho: float, side) -> float:
    """Negative binomial tail bounds for integer ``gamma``.

    upper: ``Pr{n >= gamma (1 + rho) / p}`` for ``rho > 0``;
    lower: ``Pr{n <= gamma (1 - rho) / p}`` for ``0 < rho < 1 - p``.
    """
    if int(gamma) != gamma or gamma < 1:
        raise DomainError(f"gamma must be a positive integer, got {gamma!r}")
    _check_unit("p", p)
    side = Side(side)
    q = 1.0 - p
    if side is Side.UPPER:
        if not rho > 0.0:
            raise DomainError(f"rho must be positive, got {rho!r}")
        w = q + rho
        log_b = (gamma / p) * (w * (math.log(q) - math.log(w)) + (1.0 + rho) * math.log1p(rho))
    else:
        if not 0.0 < rho < q:
            raise DomainError(f"rho must lie in (0, 1 - p), got {rho!r}")
        w = q - rho
        log_b = (gamma / p) * (_xlogx_ratio(w, q, w) + (1.0 - rho) * math.log1p(-rho))
    return _clamped(log_b)


def expected_n_bracket(gamma: float, mu: float) -> tuple[float, float]:
    """``(gamma / mu, gamma / mu + 1)``: the mean stopped sample size lies in ``[lo, hi)``."""
    _check_unit("mu", mu)
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    return gamma / mu, gamma / mu + 1.0
