import itertools
import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from growthlab import (
    Config,
    Params,
    RngStream,
    escape_bound,
    pair_stick_lower_factor_mc,
    pair_stick_probability_mc,
    pair_stick_upper_bound_mc,
    relocation_stopping_time,
    single_site_stick_probability,
)
from growthlab.acceptance import random_peak_instance
from growthlab.model import log_rates
from growthlab.oracles import pair_path_weights, pair_rates

mp.mp.dps = 40


def mp_rates(lam, x):
    n = len(lam)
    return [mp.e ** (mp.mpf(lam[i]) * (x[i - 1] + x[i] + x[(i + 1) % n])) for i in range(n)]


def mp_stick_product(lam, x, k, eps=mp.mpf("1e-30")):
    """Product of the chance of landing at k, one particle at a time."""
    x = list(x)
    prod, m = mp.mpf(1), 0
    while True:
        g = mp_rates(lam, x)
        term = g[k - 1] / mp.fsum(g)
        prod *= term
        x[k - 1] += 1
        m += 1
        if 1 - term < eps and m > 5:
            return prod


def chain_pair_probability(lam, x, k, n):
    """Exact P(first n+1 particles land in {k, k+1}) by summing over allocation orders."""
    size = len(lam)
    a, b = k - 1, k % size
    total = mp.mpf(0)
    for seq in itertools.product((a, b), repeat=n + 1):
        y, prob = list(x), mp.mpf(1)
        for s in seq:
            g = mp_rates(lam, y)
            prob *= g[s] / mp.fsum(g)
            y[s] += 1
        total += prob
    return total


class TestSingleSite:
    def test_peak_from_zero(self, peak4, zeros4):
        ref = mp.nprod(lambda n: mp.e ** (3 * n) / (2 * mp.e**n + mp.e ** (3 * n) + 1), [0, mp.inf])
        got = single_site_stick_probability(peak4, zeros4, 2, tol=1e-10)
        assert abs(got - float(ref)) < 1e-10
        assert got >= float(ref) - 1e-16
        assert got == pytest.approx(0.181139548852872091, abs=1e-10)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_instances_match_high_precision(self, seed):
        params, x, k = random_peak_instance(np.random.default_rng(seed))
        ref = mp_stick_product(params.lambdas.tolist(), x.counts.tolist(), k)
        got = single_site_stick_probability(params, x, k, tol=1e-10)
        assert abs(got - float(ref)) < 1e-10
        assert 0.0 < got <= 1.0

    def test_dominant_limit(self, peak4):
        x = Config((0, 40, 0, 0))
        assert single_site_stick_probability(peak4, x, 2) == 1.0

    def test_counts_near_cap_stay_finite(self, peak4):
        x = Config((2**39, 2**39, 0, 0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert single_site_stick_probability(peak4, x, 2) == 1.0
            assert escape_bound(peak4, x, 2) == 0.0

    def test_not_a_peak(self, peak4, zeros4):
        with pytest.raises(ValueError, match="local maximum"):
            single_site_stick_probability(peak4, zeros4, 3)

    def test_not_dominant(self, peak4):
        with pytest.raises(ValueError, match="maximal rate"):
            single_site_stick_probability(peak4, Config((0, 0, 0, 9)), 2)


class TestEscapeBound:
    def test_closed_form_eight_particles(self, peak4):
        e = math.e
        ref = 2 * e**-16 / (1 - e**-2) + e**-24 / (1 - e**-3)
        got = escape_bound(peak4, Config((0, 8, 0, 0)), 2)
        assert got == pytest.approx(ref, rel=1e-14)
        assert got == pytest.approx(2.603375593389594e-07, rel=1e-14)

    def test_closed_form_zero(self, peak4, zeros4):
        ref = 2 / (1 - mp.e**-2) + 1 / (1 - mp.e**-3)
        assert escape_bound(peak4, zeros4, 2) == pytest.approx(float(ref), rel=1e-14)

    def test_dominates_escape_probability(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            params, x, k = random_peak_instance(rng)
            assert escape_bound(params, x, k) >= 1.0 - single_site_stick_probability(params, x, k)


SADDLE_BELOW = Config((1, 0, 0, 0, 0))
SADDLE_ABOVE = Config((0, 3, 0, 1, 0))


class TestPairWeights:
    def test_zero_horizon_is_exact(self, saddle5):
        est, se = pair_stick_probability_mc(saddle5, SADDLE_BELOW, 2, 0, samples=50)
        g = np.exp(log_rates(saddle5, SADDLE_BELOW))
        assert est == pytest.approx((g[1] + g[2]) / g.sum(), rel=1e-14)
        assert se == 0.0

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_matches_exact_chain(self, saddle5, n):
        ref = float(chain_pair_probability(saddle5.lambdas.tolist(), SADDLE_BELOW.counts.tolist(), 2, n))
        est, se = pair_stick_probability_mc(saddle5, SADDLE_BELOW, 2, n, samples=20_000, seed=4)
        assert abs(est - ref) <= 4 * se

    def test_bernoulli_expectation_is_exact(self, saddle5):
        # averaging the path weight over all 2^n paths reproduces the chain probability
        n = 4
        pr = pair_rates(saddle5, SADDLE_BELOW, 2)
        total = mp.mpf(0)
        for path in itertools.product((0, 1), repeat=n):
            u = np.concatenate(([0], np.cumsum(path)))
            weight = mp.mpf(1)
            for i in range(n + 1):
                a = mp.e ** (pr.log_gamma_left + pr.lambda_left * (i - u[i]) - pr.lam * i)
                b = mp.e ** (pr.log_gamma_right + pr.lambda_right * u[i] - pr.lam * i)
                c = mp.e ** (pr.log_gamma_rest - pr.lam * i)
                weight /= 1 + a + b + c
            ones = sum(path)
            total += weight * pr.p**ones * (1 - pr.p) ** (n - ones)
        ref = chain_pair_probability(saddle5.lambdas.tolist(), SADDLE_BELOW.counts.tolist(), 2, n)
        assert abs(total - ref) < 1e-14

    def test_upper_dominates_pathwise(self, saddle5):
        w = pair_path_weights(saddle5, SADDLE_BELOW, 2, 30, samples=3000, seed=1)
        assert np.all(w["upper"] >= w["exact"])
        assert np.all((w["lower"] >= 0) & (w["lower"] <= 1))

    def test_monotone_in_horizon_on_common_paths(self, saddle5):
        prev = None
        for n in (5, 10, 20, 40):
            w = pair_path_weights(saddle5, SADDLE_BELOW, 2, n, samples=2500, seed=7)["exact"]
            if prev is not None:
                assert np.all(w <= prev * (1 + 1e-12))
            prev = w

    def test_zero_sticking_decays(self, saddle5):
        early = pair_stick_upper_bound_mc(saddle5, SADDLE_ABOVE, 2, 5, samples=5000)[0]
        late = pair_stick_upper_bound_mc(saddle5, SADDLE_ABOVE, 2, 50, samples=5000)[0]
        assert late < early
        assert pair_stick_upper_bound_mc(saddle5, SADDLE_ABOVE, 2, 2000, samples=2000)[0] < 0.05

    def test_lower_factor_reported(self, saddle5):
        est, se = pair_stick_lower_factor_mc(saddle5, SADDLE_BELOW, 2, 20, samples=2000)
        assert 0.0 < est <= 1.0 and se >= 0.0

    def test_large_exponents_do_not_overflow(self, saddle5):
        x = Config((10**6, 10**6, 10**6, 0, 0))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            w = pair_path_weights(saddle5, x, 2, 50, samples=100)
        assert np.all(np.isfinite(w["exact"]))

    def test_requires_equal_pair(self, peak4, zeros4):
        with pytest.raises(ValueError, match="equal lambda"):
            pair_stick_probability_mc(peak4, zeros4, 1, 5)


class TestRelocation:
    def test_already_overtaken(self, saddle5):
        x = Config((0, 0, 0, 3, 0))
        t = relocation_stopping_time(saddle5, x, 2, RngStream(0, 0))
        assert t.right == 0 and t.side == "right"

    def test_deterministic_limit(self, saddle5):
        # r = 40 makes p round to exactly 1, so the right count grows every step
        x = Config((0, 200, 0, 40, 0))
        pr = pair_rates(saddle5, x, 2, require_max=False)
        assert pr.p == 1.0
        expected = math.ceil(-pr.log_gamma_right / (pr.lambda_right - pr.lam))
        t = relocation_stopping_time(saddle5, x, 2, RngStream(0, 0))
        assert t.right == expected and t.left is None

    def test_finite_when_drift_positive(self, saddle5):
        times = [relocation_stopping_time(saddle5, SADDLE_ABOVE, 2, RngStream(3, i)).first
                 for i in range(10_000)]
        assert all(t is not None for t in times)

    def test_refuses_without_positive_drift(self, saddle5):
        with pytest.raises(ValueError, match="non-positive"):
            relocation_stopping_time(saddle5, Config((3, 0, 0, 0, 0)), 2, RngStream(0, 0))
