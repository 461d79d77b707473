"""Seeded Monte Carlo experiments on the inverse sampling scheme.

Every trial ``t`` of a run with root seed ``s`` draws from its own generator
keyed by ``SeedSequence(s, spawn_key=(t,))``.  A trial's stream therefore
depends only on ``(s, t)``, so serial and parallel execution produce the
same sample sizes in the same order.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .engine import (
    DEFAULT_CAP,
    Side,
    StoppingState,
    bernoulli_sample_size_tails,
    estimate,
    expected_n_bracket,
    sample_size_lower_tail,
    sample_size_upper_tail,
)
from .errors import CapExceededError, DomainError
from .thresholds import PrecisionSpec, explicit_gamma

_MAX_CHUNK = 1 << 20
_MIN_CHUNK = 64
_WEIGHT_TOL = 1e-12


# -- distributions -----------------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"Bernoulli p must lie in [0, 1], got {self.p!r}")

    @property
    def mean(self) -> float:
        return self.p

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (rng.random(size) < self.p).astype(float)

    def label(self) -> str:
        return f"bernoulli:{self.p!r}"


@dataclass(frozen=True)
class ScaledBinomial:
    """``Z / L`` with ``Z ~ Binomial(L, rate)``: the fraction of bit errors in a block of ``L``."""

    L: int
    rate: float

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise DomainError(f"L must be an integer >= 2, got {self.L!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise DomainError(f"rate must lie in [0, 1], got {self.rate!r}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def mean(self) -> float:
        return self.rate

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.binomial(self.L, self.rate, size) / self.L

    def label(self) -> str:
        return f"scaled-binomial:{self.L},{self.rate!r}"


@dataclass(frozen=True)
class DiscreteOnUnit:
    support: tuple
    weights: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.support)
        w = tuple(float(x) for x in self.weights)
        if not s or len(s) != len(w):
            raise DomainError("support and weights must be non-empty and equally long")
        if any(not 0.0 <= x <= 1.0 for x in s):
            raise DomainError("support points must lie in [0, 1]")
        if any(x < 0.0 for x in w) or abs(math.fsum(w) - 1.0) > _WEIGHT_TOL:
            raise DomainError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return math.fsum(x * w for x, w in zip(self.support, self.weights))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = np.searchsorted(np.cumsum(self.weights), rng.random(size), side="right")
        return np.asarray(self.support)[np.minimum(idx, len(self.support) - 1)]

    def label(self) -> str:
        pairs = ",".join(f"{x!r}@{w!r}" for x, w in zip(self.support, self.weights))
        return f"discrete:{pairs}"


@dataclass(frozen=True)
class BetaLike:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DomainError("beta shapes must be positive")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.a, self.b, size)

    def label(self) -> str:
        return f"beta:{self.a!r},{self.b!r}"


BoundedDistribution = Bernoulli | ScaledBinomial | DiscreteOnUnit | BetaLike

_DIST_RE = re.compile(r"^\s*([a-z-]+)\s*:\s*(.+?)\s*$")


def parse_distribution(text: str) -> BoundedDistribution:
    """Parse ``bernoulli:P``, ``scaled-binomial:L,R``, ``beta:A,B`` or
    ``discrete:X1@W1,X2@W2,...``."""
    m = _DIST_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse distribution {text!r}")
    kind, args = m.group(1), m.group(2)
    try:
        if kind == "bernoulli":
            return Bernoulli(float(args))
        if kind == "scaled-binomial":
            L, rate = args.split(",")
            return ScaledBinomial(int(L), float(rate))
        if kind == "beta":
            a, b = args.split(",")
            return BetaLike(float(a), float(b))
        if kind == "discrete":
            pairs = [item.split("@") for item in args.split(",")]
            return DiscreteOnUnit(tuple(float(x) for x, _ in pairs), tuple(float(w) for _, w in pairs))
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"cannot parse distribution {text!r}: {exc}") from None
    raise DomainError(f"unknown distribution kind {kind!r}")


# -- sample sizes ------------------------------------------------------------

def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _chunk_size(dist, gamma: float, remaining_sum: float) -> int:
    mu = dist.mean
    if mu <= 0.0:
        return _MAX_CHUNK
    guess = 1.1 * remaining_sum / mu + 4.0 * math.sqrt(max(remaining_sum, 1.0)) / mu
    return int(min(max(guess, _MIN_CHUNK), _MAX_CHUNK))


def _one_trial(dist, gamma: float, seed: int, trial: int, cap: int) -> int:
    rng = _trial_rng(seed, trial)
    state = StoppingState(gamma)
    while True:
        room = cap - state.count
        if room <= 0:
            raise CapExceededError(cap, trial)
        size = min(_chunk_size(dist, gamma, gamma - state.sample_sum), room)
        state.ingest_block(dist.draw(rng, size))
        if state.stopped:
            return state.count


def _trial_range(args) -> np.ndarray:
    dist, gamma, seed, start, stop, cap = args
    return np.array([_one_trial(dist, gamma, seed, t, cap) for t in range(start, stop)], dtype=np.int64)


def sample_sizes(dist, gamma: float, trials: int, seed: int, workers: int = 1, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Stopped sample size of each of ``trials`` independent runs, in trial order."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials!r}")
    StoppingState(gamma)  # validates gamma
    if workers <= 1 or trials < 2:
        return _trial_range((dist, gamma, seed, 0, trials, cap))
    pieces = min(trials, 4 * workers)
    edges = np.linspace(0, trials, pieces + 1).astype(int)
    jobs = [(dist, gamma, seed, int(a), int(b), cap) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(_trial_range, jobs)))


# -- batches -----------------------------------------------------------------

@dataclass
class TrialBatchResult:
    trials: int
    successes: int
    coverage: float
    n_mean: float
    n_std: float
    n_min: int
    n_max: int
    seed: int
    gamma: float
    mean: float
    epsilon: float
    delta: float
    estimator: str
    distribution: str
    n_bracket: tuple
    histogram: list = field(default_factory=list)

    @property
    def coverage_floor(self) -> float:
        """``1 - delta`` less three binomial standard errors."""
        target = 1.0 - self.delta
        return target - 3.0 * math.sqrt(target * self.delta / self.trials)

    @property
    def n_stderr(self) -> float:
        return self.n_std / math.sqrt(self.trials)

    def n_mean_in_bracket(self, sigmas: float = 3.0) -> bool:
        lo, hi = self.n_bracket
        slack = sigmas * self.n_stderr
        return lo - slack <= self.n_mean <= hi + slack

    def to_dict(self, histogram: bool = True) -> dict:
        out = asdict(self)
        out["n_bracket"] = list(self.n_bracket)
        out["n_stderr"] = self.n_stderr
        if not histogram:
            out.pop("histogram")
        return out


def _summarise(n: np.ndarray, dist, gamma, spec, estimator, seed) -> TrialBatchResult:
    mu = dist.mean
    est = estimate(gamma, n, estimator)
    successes = int(np.count_nonzero(np.abs(est - mu) < spec.epsilon * mu))
    values, counts = np.unique(n, return_counts=True)
    return TrialBatchResult(
        trials=int(n.size),
        successes=successes,
        coverage=successes / n.size,
        n_mean=float(n.mean()),
        n_std=float(n.std(ddof=1)) if n.size > 1 else 0.0,
        n_min=int(n.min()),
        n_max=int(n.max()),
        seed=int(seed),
        gamma=float(gamma),
        mean=float(mu),
        epsilon=spec.epsilon,
        delta=spec.delta,
        estimator=estimator,
        distribution=dist.label(),
        n_bracket=expected_n_bracket(gamma, mu) if 0.0 < mu < 1.0 else (gamma, gamma + 1.0),
        histogram=[[int(v), int(c)] for v, c in zip(values, counts)],
    )


def run_batch(
    dist,
    gamma: float,
    spec: PrecisionSpec,
    estimator: str = "mvue",
    trials: int = 20_000,
    seed: int = 0,
    workers: int = 1,
    cap: int = DEFAULT_CAP,
) -> TrialBatchResult:
    """Run ``trials`` independent streams and score each estimate against the true mean.

    A trial succeeds when the relative error of its estimate is below
    ``spec.epsilon``.
    """
    if estimator not in ("mle", "mvue"):
        raise DomainError(f"unknown estimator {estimator!r}")
    n = sample_sizes(dist, gamma, trials, seed, workers=workers, cap=cap)
    return _summarise(n, dist, gamma, spec, estimator, seed)


def ber_gamma(spec: PrecisionSpec) -> float:
    """Threshold on the sum of block error fractions ``Z_i / L``.

    This is the explicit threshold itself; on the raw error counts ``Z_i``
    it corresponds to ``L`` times that value.
    """
    return explicit_gamma(spec)


def ber_demo(
    L: int,
    rate: float,
    spec: PrecisionSpec,
    trials: int = 5_000,
    seed: int = 0,
    workers: int = 1,
    cap: int = DEFAULT_CAP,
) -> TrialBatchResult:
    """Bit error rate estimation from per-block error fractions with the unbiased-style estimate."""
    dist = ScaledBinomial(L, rate)
    return run_batch(dist, ber_gamma(spec), spec, "mvue", trials, seed, workers=workers, cap=cap)


# -- tail checks -------------------------------------------------------------

@dataclass(frozen=True)
class TailRow:
    rho: float
    side: str
    cutoff: float
    empirical: float
    bound: float
    bernoulli_bound: float | None
    slack: float

    @property
    def ok(self) -> bool:
        limit = self.bound if self.bernoulli_bound is None else min(self.bound, self.bernoulli_bound)
        return self.empirical <= limit + self.slack


def _general_bound(gamma, mu, rho, side: Side) -> float:
    if side is Side.UPPER:
        return 1.0 if rho <= mu / gamma else sample_size_upper_tail(gamma, mu, rho)
    return 1.0 if rho <= 0.0 else sample_size_lower_tail(gamma, mu, rho)


def _bernoulli_bound(gamma, p, rho, side: Side):
    if rho <= 0.0:
        return 1.0
    return bernoulli_sample_size_tails(int(gamma), p, rho, side)


def tail_empirics(
    dist,
    gamma: float,
    rho_sides: Sequence[tuple],
    trials: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    cap: int = DEFAULT_CAP,
) -> list[TailRow]:
    """Compare empirical tails of ``n`` with the theoretical bounds.

    ``rho_sides`` is a sequence of ``(rho, "upper" | "lower")``.  Upper rows
    count ``n >= gamma (1 + rho) / mu`` and lower rows ``n <= gamma (1 - rho) / mu``.
    Bernoulli streams with integer ``gamma`` also report the sharper
    negative binomial bound.  The slack is three binomial standard errors
    at the bound.
    """
    mu = dist.mean
    if not 0.0 < mu < 1.0:
        raise DomainError(f"tail checks need a mean in (0, 1), got {mu!r}")
    n = sample_sizes(dist, gamma, trials, seed, workers=workers, cap=cap)
    bern = isinstance(dist, Bernoulli) and float(gamma).is_integer()
    rows = []
    for rho, side in rho_sides:
        side = Side(side)
        if side is Side.UPPER:
            cutoff = gamma * (1.0 + rho) / mu
            emp = np.count_nonzero(n >= cutoff) / n.size
        else:
            cutoff = gamma * (1.0 - rho) / mu
            emp = np.count_nonzero(n <= cutoff) / n.size
        bound = _general_bound(gamma, mu, rho, side)
        b_bound = _bernoulli_bound(gamma, mu, rho, side) if bern else None
        tight = bound if b_bound is None else min(bound, b_bound)
        slack = 3.0 * math.sqrt(tight * (1.0 - tight) / n.size)
        rows.append(TailRow(float(rho), side.value, cutoff, float(emp), bound, b_bound, slack))
    return rows
