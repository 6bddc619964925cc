import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthlab import (
    Config,
    Params,
    RngStream,
    SaturationError,
    StopReason,
    log_rates,
    neighborhood_count,
    simulate,
    step,
    transition_probabilities,
)
from growthlab._validation import COUNT_CAP

lambdas_st = st.integers(4, 9).flatmap(
    lambda n: st.lists(st.floats(0.1, 5.0), min_size=n, max_size=n)
)


def counts_for(n):
    return st.lists(st.integers(0, 200), min_size=n, max_size=n)


def mp_probs(lam, x):
    n = len(lam)
    g = [mp.e ** (mp.mpf(lam[i]) * (x[i - 1] + x[i] + x[(i + 1) % n])) for i in range(n)]
    s = mp.fsum(g)
    return [gi / s for gi in g]


class TestValidation:
    def test_too_few_sites(self):
        with pytest.raises(ValueError, match="n_sites must be >= 4"):
            Params((1.0, 1.0, 1.0))

    def test_nonpositive_lambda_names_site(self):
        with pytest.raises(ValueError, match=r"lambdas\[3\]"):
            Params((1.0, 2.0, -1.0, 1.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            Params((1.0, 1.0, 1.0, 1.0), n_sites=5)

    def test_negative_count(self):
        with pytest.raises(ValueError, match=r"counts\[2\]"):
            Config((0, -1, 0, 0))

    def test_site_out_of_range(self):
        with pytest.raises(IndexError):
            neighborhood_count(Config.zeros(4), 5)

    def test_config_size_must_match(self, peak4):
        with pytest.raises(ValueError, match="5 sites"):
            transition_probabilities(peak4, Config.zeros(5))

    def test_params_are_immutable(self, peak4):
        with pytest.raises(ValueError):
            peak4.lambdas[0] = 2.0


class TestRates:
    def test_neighbourhood_wraps(self):
        x = Config((1, 2, 3, 4, 5))
        assert neighborhood_count(x, 1) == 5 + 1 + 2
        assert neighborhood_count(x, 5) == 4 + 5 + 1

    def test_uniform_lambda_one_particle(self, flat4):
        probs = transition_probabilities(flat4, Config((1, 0, 0, 0)))
        big = float(mp.e / (3 * mp.e + 1))
        small = float(1 / (3 * mp.e + 1))
        np.testing.assert_allclose(probs, [big, big, small, big], rtol=1e-14)

    def test_zero_config_is_uniform(self, peak4, zeros4):
        np.testing.assert_allclose(transition_probabilities(peak4, zeros4), 0.25, rtol=1e-15)

    def test_huge_counts_do_not_overflow(self, peak4):
        x = Config((10**9, 10**9, 0, 0))
        probs = transition_probabilities(peak4, x)
        assert np.all(np.isfinite(probs))
        assert probs[1] == 1.0

    @settings(max_examples=60, deadline=None)
    @given(lambdas_st, st.data())
    def test_matches_high_precision(self, lam, data):
        x = data.draw(counts_for(len(lam)))
        ref = mp_probs(lam, x)
        got = transition_probabilities(Params(lam), Config(x))
        for g, r in zip(got, ref):
            assert abs(g - float(r)) <= 1e-12

    @settings(max_examples=60, deadline=None)
    @given(lambdas_st, st.data())
    def test_simplex_and_argmax(self, lam, data):
        x = data.draw(counts_for(len(lam)))
        params = Params(lam)
        probs = transition_probabilities(params, Config(x))
        assert np.all(probs >= 0)
        assert math.isclose(probs.sum(), 1.0, rel_tol=1e-12)
        ell = log_rates(params, Config(x))
        assert set(np.flatnonzero(probs == probs.max())) <= set(np.flatnonzero(ell >= ell.max() - 1e-9))

    @settings(max_examples=40, deadline=None)
    @given(lambdas_st, st.data())
    def test_rotation_equivariance(self, lam, data):
        n = len(lam)
        x = data.draw(counts_for(n))
        s = data.draw(st.integers(0, n - 1))
        base = transition_probabilities(Params(lam), Config(x))
        rotated = transition_probabilities(Params(np.roll(lam, s)), Config(np.roll(x, s)))
        np.testing.assert_allclose(rotated, np.roll(base, s), rtol=1e-12, atol=1e-300)


class TestStep:
    def test_inverse_cdf_single_draw(self, peak4, zeros4):
        # each site has probability 1/4, so the draw picks floor(4u) + 1
        rng = RngStream(5, 0)
        u = RngStream(5, 0).uniform()
        _, site = step(peak4, zeros4, rng)
        assert site == int(4 * u) + 1

    def test_step_adds_one_particle(self, peak4, zeros4):
        new, site = step(peak4, zeros4, RngStream(1, 0))
        assert new.total == 1 and new[site] == 1

    def test_saturation(self, peak4):
        x = Config((0, COUNT_CAP - 1, 0, 0))
        with pytest.raises(SaturationError):
            step(peak4, x, RngStream(0, 0))

    @pytest.mark.parametrize("n_steps", [1, 100, 5000])
    def test_simulate_equals_repeated_steps(self, saddle5, n_steps):
        summary = simulate(saddle5, None, n_steps, RngStream(3, 9), record_history=True)
        rng = RngStream(3, 9)
        x, sites = Config.zeros(5), []
        for _ in range(n_steps):
            x, s = step(saddle5, x, rng)
            sites.append(s)
        assert summary.final == x
        assert summary.history.tolist() == sites


class TestSimulate:
    def test_deterministic(self, saddle5):
        a = simulate(saddle5, None, 10_000, RngStream(11, 2), record_history=True)
        b = simulate(saddle5, None, 10_000, RngStream(11, 2), record_history=True)
        assert a.same_as(b)

    def test_streams_differ(self, saddle5):
        a = simulate(saddle5, None, 1000, RngStream(11, 2), record_history=True)
        b = simulate(saddle5, None, 1000, RngStream(11, 3), record_history=True)
        assert not a.same_as(b)

    def test_conserves_particles(self, peak4):
        s = simulate(peak4, (3, 0, 1, 0), 777, RngStream(0, 0))
        assert s.final.total == 4 + 777
        assert s.steps_executed == 777
        assert s.stop_reason is StopReason.COMPLETED

    def test_watch_stops_at_exit(self, peak4):
        s = simulate(peak4, None, 1000, RngStream(0, 0), watch=(2,), record_history=True)
        assert s.stop_reason is StopReason.EXITED
        assert s.exit_site != 2
        assert s.history[-1] == s.exit_site
        assert np.all(s.history[:-1] == 2)

    def test_detection_window(self, peak4):
        s = simulate(peak4, None, 100_000, RngStream(0, 1), detect_window=500, record_history=True)
        assert s.stop_reason is StopReason.DETECTED
        assert s.single_streak >= 500
        assert np.all(s.history[-500:] == s.last_site)

    def test_observer_stops_on_block(self, peak4):
        seen = []

        def obs(sites, counts):
            seen.append(sites.size)
            return len(seen) == 2

        s = simulate(peak4, None, 100_000, RngStream(0, 0), observers=[obs])
        assert s.stop_reason is StopReason.OBSERVER
        assert s.observer_index == 0
        assert s.steps_executed == sum(seen)

    def test_overflow_reported(self, peak4):
        x = Config((0, COUNT_CAP - 3, 0, 0))
        s = simulate(peak4, x, 10, RngStream(0, 0))
        assert s.stop_reason is StopReason.OVERFLOW
        assert s.final[2] < COUNT_CAP

    def test_pair_streaks_track_runs(self, flat4):
        s = simulate(flat4, None, 3000, RngStream(4, 0), record_history=True)
        h = s.history
        for j in range(4):
            members = {j + 1, (j + 1) % 4 + 1}
            run = 0
            for site in h[::-1]:
                if site not in members:
                    break
                run += 1
            assert s.pair_streaks[j] == run
