import csv
import io
import math

import numpy as np
import pytest

from growthlab import (
    Config,
    ExitKind,
    FirstExit,
    PairPersisted,
    Params,
    RngStream,
    VerdictKind,
    certificate_soundness,
    chain_stick_frequency,
    detect_localization,
    escape_bound,
    first_exit,
    ratio_drift,
    run_batch,
    run_trajectory,
)
from growthlab._validation import COUNT_CAP
from growthlab.experiments import CSV_COLUMNS, Verdict, thread_count, verdict_from_summary
from growthlab.model import simulate


class TestDetect:
    def test_short_stream_undecided(self, peak4):
        v = detect_localization(peak4, [2] * 10, Config((0, 10, 0, 0)), window=20)
        assert v.kind is VerdictKind.UNDECIDED

    def test_certified_peak(self, peak4):
        final = Config((0, 30, 0, 0))
        v = detect_localization(peak4, [2] * 30, final, window=20)
        assert v.kind is VerdictKind.SINGLE_SITE and v.site == 2
        assert v.certified
        assert v.residual_bound == escape_bound(peak4, final, 2)
        assert v.residual_bound < 1e-6

    def test_uncertified_peak(self, peak4):
        v = detect_localization(peak4, [2] * 3, Config((0, 3, 0, 0)), window=3)
        assert v.kind is VerdictKind.SINGLE_SITE and not v.certified
        assert v.residual_bound >= 1e-6

    def test_pair_with_zero_r(self, flat4):
        hist = [1, 2] * 50
        v = detect_localization(flat4, hist, Config((50, 50, 0, 0)), window=100)
        assert v.kind is VerdictKind.PAIR and v.site == 1
        assert v.R == 0 and v.predicted_ratio == 1.0 and v.ratio == 1.0

    def test_single_streak_inside_pair_is_pair(self, saddle5):
        v = detect_localization(saddle5, [3] * 50, Config((0, 2, 50, 0, 0)), window=50)
        assert v.kind is VerdictKind.PAIR and v.site == 2

    def test_streak_at_non_maximum_without_pair(self):
        params = Params((1.0, 2.0, 1.5, 2.5, 0.5))
        v = detect_localization(params, [3] * 10, Config((0, 0, 10, 0, 0)), window=10)
        assert v.kind is VerdictKind.SINGLE_SITE and v.site == 3 and not v.certified

    def test_summary_matches_history(self, saddle5):
        for i in range(20):
            verdict, summary = run_trajectory(saddle5, None, 3000, RngStream(1, i), window=300,
                                              stop_on_detect=False, record_history=True)
            again = detect_localization(saddle5, summary.history, summary.final, window=300)
            assert verdict == again

    def test_overflow_verdict(self, peak4):
        verdict, summary = run_trajectory(peak4, (0, COUNT_CAP - 2, 0, 0), 10, RngStream(0, 0))
        assert verdict.kind is VerdictKind.OVERFLOW


class TestRatio:
    def test_values(self, flat4):
        assert ratio_drift(flat4, Verdict(VerdictKind.PAIR, 1, R=0, ratio=1.0))[2] == 1.0
        r, ratio, predicted, rel = ratio_drift(flat4, Verdict(VerdictKind.PAIR, 1, R=1, ratio=3.0))
        assert predicted == pytest.approx(math.e, rel=1e-15)
        assert rel == pytest.approx(3.0 / math.e - 1.0)

    def test_needs_pair(self, flat4):
        with pytest.raises(ValueError):
            ratio_drift(flat4, Verdict(VerdictKind.UNDECIDED))

    def test_pair_ratio_converges(self, flat4):
        report = run_batch(flat4, None, runs=40, steps=100_000, master_seed=3, stop_on_detect=False)
        errs = [ratio_drift(flat4, r.verdict)[3] for r in report.records
                if r.verdict.kind is VerdictKind.PAIR and abs(r.verdict.R) <= 3]
        assert len(errs) >= 30
        assert np.median(errs) < 0.05


class TestFirstExit:
    def test_forced_right_exit(self, saddle5):
        out = first_exit(saddle5, (0, 0, 0, 30, 0), 2, RngStream(0, 0))
        assert isinstance(out, FirstExit)
        assert out.kind is ExitKind.RIGHT and out.exit_site == 4 and out.exit_time == 1

    def test_other_exits_rare_when_pair_dominates(self, saddle5):
        x = Config((0, 10, 0, 1, 0))
        exits = [first_exit(saddle5, x, 2, RngStream(5, i), max_steps=10_000) for i in range(1000)]
        done = [e for e in exits if isinstance(e, FirstExit)]
        other = sum(e.kind is ExitKind.OTHER for e in done)
        assert done and other / len(done) < 0.05

    def test_pair_can_persist(self, saddle5):
        x = Config((1, 0, 0, 0, 0))
        exits = [first_exit(saddle5, x, 2, RngStream(6, i), max_steps=10_000) for i in range(1000)]
        assert sum(isinstance(e, PairPersisted) for e in exits) > 0


class TestBatch:
    def test_single_run_matches_trajectory(self, saddle5):
        report = run_batch(saddle5, None, runs=1, steps=20_000, master_seed=9)
        verdict, summary = run_trajectory(saddle5, None, 20_000, RngStream(9, 0))
        assert report.records[0].verdict == verdict
        assert report.records[0].steps_executed == summary.steps_executed

    def test_deterministic(self, saddle5):
        a = run_batch(saddle5, None, runs=30, steps=20_000, master_seed=4)
        b = run_batch(saddle5, None, runs=30, steps=20_000, master_seed=4)
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()

    def test_thread_count_independent(self, saddle5):
        a = run_batch(saddle5, None, runs=50, steps=20_000, master_seed=4, n_jobs=1)
        b = run_batch(saddle5, None, runs=50, steps=20_000, master_seed=4, n_jobs=8)
        assert a.to_csv() == b.to_csv()

    def test_csv_layout(self, saddle5):
        text = run_batch(saddle5, None, runs=10, steps=20_000, master_seed=2).to_csv()
        rows = list(csv.DictReader(io.StringIO(text)))
        assert tuple(rows[0].keys()) == CSV_COLUMNS
        assert [int(r["run_id"]) for r in rows] == list(range(10))
        for r in rows:
            if r["ratio"] not in ("", "inf"):
                # 17 significant digits round-trip exactly
                assert format(float(r["ratio"]), ".17g") == r["ratio"]

    def test_pair_verdicts_only_on_equal_pairs(self):
        params = Params((1.0, 1.0, 2.0, 2.0, 0.7, 1.5))
        report = run_batch(params, None, runs=60, steps=50_000, master_seed=1)
        for r in report.records:
            if r.verdict.kind is VerdictKind.PAIR:
                k = r.verdict.site
                assert params.lambdas[k - 1] == params.lambdas[k % 6]

    def test_r_constant_over_window(self, flat4):
        for i in range(10):
            verdict, summary = run_trajectory(flat4, None, 50_000, RngStream(2, i), window=1000,
                                              record_history=True)
            if verdict.kind is not VerdictKind.PAIR:
                continue
            k = verdict.site
            tail = summary.history[-1000:]
            assert set(tail.tolist()) <= {k, k % 4 + 1}

    def test_certified_means_small_residual(self):
        report = run_batch(Params((1.0, 2.0, 1.5, 2.5, 0.5)), None, runs=50, steps=20_000)
        for r in report.records:
            if r.verdict.certified:
                assert r.verdict.residual_bound < report.cert_threshold

    def test_report_dict(self, saddle5):
        d = run_batch(saddle5, None, runs=5, steps=5000).to_dict()
        assert d["runs"] == 5 and sum(d["verdicts"].values()) == 5
        assert d["seeds"] == {"master_seed": 0, "streams": [0, 4]}

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("GROWTHLAB_THREADS", "6")
        assert thread_count() == 6
        assert thread_count(2) == 2


class TestChainEstimators:
    def test_chain_frequency_matches_exact_first_step(self, peak4, zeros4):
        est, se = chain_stick_frequency(peak4, zeros4, (2,), 1, 20_000, seed=0)
        assert abs(est - 0.25) <= 3 * se

    def test_first_step_uniform(self, flat4):
        # first allocations from the empty configuration are uniform
        counts = np.zeros(4)
        for i in range(100_000 // 100):
            s = simulate(flat4, None, 1, RngStream(77, i), record_history=True)
            counts[s.history[0] - 1] += 1
        n = counts.sum()
        se = math.sqrt(0.25 * 0.75 / n)
        assert np.all(np.abs(counts / n - 0.25) <= 3 * se)

    def test_soundness_small(self):
        rep = certificate_soundness(Params((1.0, 2.0, 1.5, 2.5, 0.5)), None, runs=50, steps=20_000)
        assert rep.certified > 40 and rep.deviations == 0

    def test_verdict_from_summary_overflow(self, peak4):
        s = simulate(peak4, (0, COUNT_CAP - 2, 0, 0), 5, RngStream(0, 0))
        assert verdict_from_summary(peak4, s).kind is VerdictKind.OVERFLOW
