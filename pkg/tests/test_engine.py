import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from invsample.engine import (
    StoppingState,
    bernoulli_sample_size_tails,
    estimate,
    expected_n_bracket,
    run_stream,
    sample_size_lower_tail,
    sample_size_upper_tail,
)
from invsample.errors import CapExceededError, DomainError, StoppingError, StreamExhaustedError
from invsample.kernels import NegBinomialParams, hoeffding_m, negbin_cdf, negbin_pmf
from invsample.simulation import Bernoulli, sample_sizes

unit_samples = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=200)


def _mp_upper(gamma, mu, rho):
    g, m, r = mp.mpf(gamma), mp.mpf(mu), mp.mpf(rho)
    t = 1 + r - m / g
    return (g / m) * (t * mp.log(t) + (t - m) * mp.log((1 - m) / (t - m)))


def _mp_lower(gamma, mu, rho):
    g, m, r = mp.mpf(gamma), mp.mpf(mu), mp.mpf(rho)
    s = 1 - r
    return (g / m) * (s * mp.log(s) + (s - m) * mp.log((1 - m) / (s - m)))


def _mp_bern_upper(gamma, p, rho):
    g, q, r = mp.mpf(gamma), 1 - mp.mpf(p), mp.mpf(rho)
    return (g / (1 - q)) * ((q + r) * mp.log(q / (q + r)) + (1 + r) * mp.log(1 + r))


class TestStoppingState:
    def test_reference_stream(self):
        s = StoppingState(2.5)
        for x in (0.9, 0.8, 0.9):
            s.ingest(x)
        assert s.stopped and s.count == 3
        assert s.sample_sum == pytest.approx(2.6)

    def test_bernoulli_stream(self):
        s = StoppingState(3)
        for x in (1, 0, 1, 1):
            s.ingest(x)
        assert s.stopped and s.count == 4

    def test_zero_stream_hits_cap(self):
        with pytest.raises(CapExceededError) as info:
            run_stream(1.5, iter(lambda: 0.0, None), cap=1000)
        assert info.value.cap == 1000

    def test_exhausted_stream(self):
        with pytest.raises(StreamExhaustedError) as info:
            run_stream(5.0, [1.0, 1.0, 0.5])
        assert info.value.count == 3
        assert info.value.sample_sum == 2.5

    def test_rejects_out_of_range(self):
        s = StoppingState(2.0)
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(DomainError):
                s.ingest(bad)
        assert s.count == 0

    def test_rejects_after_stop(self):
        s = StoppingState(1.5).ingest(1.0).ingest(1.0)
        with pytest.raises(StoppingError):
            s.ingest(0.3)
        with pytest.raises(StoppingError):
            s.ingest_block([0.3])

    @pytest.mark.parametrize("gamma", [1.0, 0.5, float("inf")])
    def test_gamma_domain(self, gamma):
        with pytest.raises(DomainError):
            StoppingState(gamma)

    def test_endpoint_samples_accepted(self):
        s = StoppingState(2.0)
        s.ingest(0.0).ingest(1.0).ingest(1.0)
        assert s.stopped and s.count == 3

    @settings(max_examples=100)
    @given(st.floats(1.01, 30.0), unit_samples)
    def test_block_matches_single_ingest(self, gamma, xs):
        a, b = StoppingState(gamma), StoppingState(gamma)
        for x in xs:
            a.ingest(x)
            if a.stopped:
                break
        used = b.ingest_block(xs)
        assert used == a.count
        assert (b.count, b.sample_sum, b.stopped) == (a.count, a.sample_sum, a.stopped)

    @settings(max_examples=100)
    @given(st.floats(1.01, 30.0), unit_samples)
    def test_invariants(self, gamma, xs):
        s = StoppingState(gamma)
        before = 0.0
        for x in xs:
            before = s.sample_sum
            s.ingest(x)
            assert s.sample_sum <= s.count + 1e-9
            if s.stopped:
                assert before < gamma <= s.sample_sum
                assert s.count >= math.ceil(gamma - 1e-9)
                break
            assert s.sample_sum < gamma

    def test_replay_is_deterministic(self):
        rng = np.random.default_rng(1)
        xs = rng.random(500)
        a, b = StoppingState(40.0), StoppingState(40.0)
        a.ingest_block(xs)
        b.ingest_block(xs)
        assert a == b

    def test_block_rejects_bad_values(self):
        with pytest.raises(DomainError):
            StoppingState(3.0).ingest_block([0.5, 1.5])
        assert StoppingState(3.0).ingest_block([]) == 0


class TestEstimates:
    def test_reference(self):
        s = StoppingState(2.5)
        for x in (0.9, 0.8, 0.9):
            s.ingest(x)
        r = s.estimates()
        assert r.mu_tilde == pytest.approx(2.5 / 3)
        assert r.mu_hat == pytest.approx(0.75)

    def test_all_ones_boundary(self):
        s = StoppingState(3)
        s.ingest_block([1, 1, 1])
        r = s.estimates()
        assert r.mu_tilde == 1.0 and r.mu_hat == 1.0

    def test_division(self):
        s = StoppingState(10)
        s.ingest_block([0.1] * 99 + [1.0])
        assert s.count == 100
        r = s.estimates()
        assert r.mu_tilde == pytest.approx(0.1)
        assert r.mu_hat == pytest.approx(9 / 99)

    def test_not_stopped(self):
        with pytest.raises(StoppingError):
            StoppingState(4.0).ingest(0.5).estimates()

    @settings(max_examples=100)
    @given(st.floats(1.01, 20.0), st.lists(st.floats(0.05, 1.0), min_size=400, max_size=400))
    def test_mu_hat_not_above_mu_tilde(self, gamma, xs):
        s = StoppingState(gamma)
        s.ingest_block(xs)
        if s.stopped:
            r = s.estimates()
            assert 0 < r.mu_tilde <= 1
            assert r.mu_hat <= r.mu_tilde

    def test_vector_estimates(self):
        n = np.array([10, 20])
        assert np.allclose(estimate(5.0, n, "mle"), [0.5, 0.25])
        assert np.allclose(estimate(5.0, n, "mvue"), [4 / 9, 4 / 19])
        with pytest.raises(DomainError):
            estimate(5.0, n, "mode")


class TestUpperTail:
    def test_limit_at_domain_edge(self):
        assert sample_size_upper_tail(100, 0.1, 0.1 / 100 * (1 + 1e-9)) == pytest.approx(1.0, abs=1e-9)

    def test_extended_precision(self):
        ref = _mp_upper(100, 0.1, 0.5)
        got = math.log(sample_size_upper_tail(100, 0.1, 0.5))
        assert got == pytest.approx(float(ref), rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            sample_size_upper_tail(100, 0.1, 0.001)
        with pytest.raises(DomainError):
            sample_size_upper_tail(100, 1.0, 0.5)

    @pytest.mark.parametrize("gamma, mu, rho", [(100, 0.1, 0.5), (20, 0.3, 2.0), (5, 0.5, 0.2)])
    def test_equals_hoeffding_exponent(self, gamma, mu, rho):
        # with m = gamma (1 + rho)/mu - 1 samples and z = gamma / m, the exponent is m z M(z, mu) = gamma M(z, mu)
        z = gamma * mu / (gamma * (1 + rho) - mu)
        expected = math.exp(min(0.0, gamma * hoeffding_m(z, mu)))
        assert sample_size_upper_tail(gamma, mu, rho) == pytest.approx(expected, rel=1e-12)

    def test_no_underflow_in_log(self):
        assert sample_size_upper_tail(1e5, 0.01, 3.0) == 0.0

    def test_monte_carlo(self):
        n = sample_sizes(Bernoulli(0.1), 100, 100_000, seed=11)
        freq = np.mean(n >= 100 * 1.5 / 0.1)
        assert freq <= sample_size_upper_tail(100, 0.1, 0.5)


class TestLowerTail:
    def test_limit_at_zero(self):
        assert sample_size_lower_tail(50, 0.2, 1e-12) == pytest.approx(1.0, abs=1e-9)

    def test_extended_precision(self):
        ref = _mp_lower(50, 0.2, 0.3)
        assert math.log(sample_size_lower_tail(50, 0.2, 0.3)) == pytest.approx(float(ref), rel=1e-10)

    def test_domain(self):
        for rho in (0.0, 0.8, 0.9):
            with pytest.raises(DomainError):
                sample_size_lower_tail(50, 0.2, rho)

    def test_monte_carlo(self):
        n = sample_sizes(Bernoulli(0.2), 50, 100_000, seed=12)
        freq = np.mean(n <= 50 * 0.7 / 0.2)
        assert freq <= sample_size_lower_tail(50, 0.2, 0.3)


class TestBernoulliTails:
    def test_lower_limit(self):
        assert bernoulli_sample_size_tails(20, 0.1, 1e-12, "lower") == pytest.approx(1.0, abs=1e-9)

    def test_upper_extended_precision(self):
        ref = _mp_bern_upper(20, 0.1, 0.5)
        assert math.log(bernoulli_sample_size_tails(20, 0.1, 0.5, "upper")) == pytest.approx(float(ref), rel=1e-10)

    def test_lower_equals_general_form(self):
        for rho in (0.1, 0.4, 0.85):
            assert bernoulli_sample_size_tails(7, 0.1, rho, "lower") == pytest.approx(
                sample_size_lower_tail(7, 0.1, rho), rel=1e-12
            )

    @pytest.mark.parametrize("gamma, p, rho", [(20, 0.1, 0.5), (10, 0.5, 0.2), (5, 0.3, 1.0), (40, 0.05, 0.2)])
    def test_upper_dominates_exact_tail(self, gamma, p, rho):
        # n >= gamma (1 + rho) / p  <=>  k >= gamma (1 + rho) / p - gamma
        k0 = math.ceil(Fraction(gamma) * (1 + Fraction(rho)) / Fraction(p) - gamma)
        exact = 1.0 - negbin_cdf(NegBinomialParams(gamma, p), k0 - 1)
        assert exact <= bernoulli_sample_size_tails(gamma, p, rho, "upper")

    @pytest.mark.parametrize("gamma, p, rho", [(20, 0.1, 0.2), (10, 0.5, 0.4), (30, 0.2, 0.5)])
    def test_lower_dominates_exact_tail(self, gamma, p, rho):
        k1 = math.floor(Fraction(gamma) * (1 - Fraction(rho)) / Fraction(p) - gamma)
        exact = negbin_cdf(NegBinomialParams(gamma, p), k1)
        assert exact <= bernoulli_sample_size_tails(gamma, p, rho, "lower")

    def test_domains(self):
        with pytest.raises(DomainError):
            bernoulli_sample_size_tails(2.5, 0.1, 0.5, "upper")
        with pytest.raises(DomainError):
            bernoulli_sample_size_tails(20, 0.1, 0.0, "upper")
        with pytest.raises(DomainError):
            bernoulli_sample_size_tails(20, 0.1, 0.95, "lower")
        with pytest.raises(ValueError):
            bernoulli_sample_size_tails(20, 0.1, 0.5, "sideways")


class TestMonotonicity:
    @pytest.mark.parametrize("gamma, mu", [(20, 0.1), (10, 0.5), (100, 0.02)])
    def test_decreasing_in_rho(self, gamma, mu):
        up = [sample_size_upper_tail(gamma, mu, r) for r in np.linspace(mu / gamma * 1.01, 3.0, 300)]
        low = [sample_size_lower_tail(gamma, mu, r) for r in np.linspace(1e-6, (1 - mu) * 0.999, 300)]
        bu = [bernoulli_sample_size_tails(gamma, mu, r, "upper") for r in np.linspace(1e-6, 3.0, 300)]
        for seq in (up, low, bu):
            assert all(b <= a + 1e-15 for a, b in zip(seq, seq[1:]))
            assert max(seq) <= 1.0


class TestExpectedN:
    def test_reference(self):
        assert expected_n_bracket(10, 0.5) == (20.0, 21.0)
        lo, hi = expected_n_bracket(838.18, 0.01)
        assert lo == pytest.approx(83818) and hi == pytest.approx(83819)

    def test_domain(self):
        with pytest.raises(DomainError):
            expected_n_bracket(10, 0.0)

    def test_monte_carlo(self):
        n = sample_sizes(Bernoulli(0.5), 10, 100_000, seed=13)
        se = n.std(ddof=1) / math.sqrt(n.size)
        assert 20 - 3 * se <= n.mean() <= 21 + 3 * se


class TestNegativeBinomialLaw:
    def test_chi_square_fit(self):
        gamma, p = 5, 0.3
        n = sample_sizes(Bernoulli(p), gamma, 100_000, seed=14)
        k = n - gamma
        prm = NegBinomialParams(gamma, p)
        top = 40
        probs = np.array([math.exp(negbin_pmf(prm, i)) for i in range(top)])
        probs = np.append(probs, 1.0 - probs.sum())
        counts = np.bincount(np.minimum(k, top), minlength=top + 1)
        _, pval = stats.chisquare(counts, probs * k.size)
        assert pval > 1e-3

    def test_per_bin_within_four_sigma(self):
        gamma, p = 3, 0.4
        n = sample_sizes(Bernoulli(p), gamma, 100_000, seed=15)
        k = n - gamma
        prm = NegBinomialParams(gamma, p)
        counts = np.bincount(k, minlength=30)
        for i in range(30):
            pi = math.exp(negbin_pmf(prm, i))
            sigma = math.sqrt(k.size * pi * (1 - pi))
            assert abs(counts[i] - k.size * pi) <= 4 * sigma + 1
