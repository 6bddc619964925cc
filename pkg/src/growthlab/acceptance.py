"""Desk-scale acceptance checks shared by the test suite and ``growthlab verify``.

Each ``criterion_*`` function runs one check at its stated size and
tolerance and returns a :class:`CriterionResult`; nothing here is tuned to
make a check pass.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .experiments import (
    VerdictKind,
    certificate_soundness,
    chain_stick_frequency,
    ratio_drift,
    run_batch,
)
from .landscape import PairType, RegimeKind, pair_type, regime, z_values
from .model import Config, Params, RngStream, log_rates
from .oracles import (
    escape_bound,
    pair_rates,
    pair_stick_probability_mc,
    pair_stick_upper_bound_mc,
    single_site_stick_probability,
)
from .progressions import (
    ZetaSpec,
    distributions_match,
    dominance_check,
    enumerate_Fn_vs_Zn,
    partial_sum_paths,
    sample_Z_until_stopping,
)

# Landscapes used by several criteria.
TWO_MAXIMA = (1.0, 2.0, 1.5, 2.5, 0.5)
SADDLE = (0.5, 1.0, 1.0, 2.0, 0.8)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name} {self.detail}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "seconds": round(self.seconds, 3), "detail": self.detail}


def _timed(number: int, name: str, body: Callable[[], tuple[bool, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, detail = body()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)


def criterion_1(seed: int = 0) -> CriterionResult:
    def body():
        t0 = time.perf_counter()
        report = run_batch(Params(TWO_MAXIMA), None, runs=2000, steps=20_000, master_seed=seed)
        elapsed = time.perf_counter() - t0
        sites = [r.verdict.site for r in report.records if r.verdict.kind is VerdictKind.SINGLE_SITE]
        at2, at4 = sites.count(2), sites.count(4)
        frac = (at2 + at4) / report.runs
        return frac >= 0.99 and at2 > 0 and at4 > 0 and elapsed < 120, {
            "fraction_at_maxima": frac, "site2": at2, "site4": at4, "elapsed_s": round(elapsed, 2)}
    return _timed(1, "single-site localisation at the local maxima", body)


def criterion_2(seed: int = 0) -> CriterionResult:
    def body():
        params = Params((1.0, 1.0, 1.0, 1.0))
        report = run_batch(params, None, runs=500, steps=100_000, master_seed=seed, stop_on_detect=False)
        pairs = [r.verdict for r in report.records if r.verdict.kind is VerdictKind.PAIR]
        frac = len(pairs) / report.runs
        errors = [ratio_drift(params, v)[3] for v in pairs if abs(v.R) <= 3]
        median = float(np.median(errors)) if errors else math.inf
        return frac >= 0.95 and median < 0.05, {
            "pair_fraction": frac, "conditioned_runs": len(errors), "median_rel_error": median}
    return _timed(2, "pair localisation with stabilised ratio", body)


def criterion_3(seed: int = 0, runs: int = 100_000) -> CriterionResult:
    def body():
        params = Params((1.0, 3.0, 1.0, 1.0))
        x = Config.zeros(4)
        exact = single_site_stick_probability(params, x, 2, tol=1e-10)
        # run long enough that leaving afterwards is below 1e-12
        horizon = 0
        while escape_bound(params, x.add(2, horizon), 2) >= 1e-12:
            horizon += 1
        est, se = chain_stick_frequency(params, x, (2,), horizon, runs, seed)
        return abs(est - exact) <= 3 * se, {
            "oracle": exact, "chain_mc": est, "se": se, "horizon": horizon}
    return _timed(3, "single-site oracle vs chain Monte Carlo", body)


def criterion_4(seed: int = 0, samples: int = 10_000) -> CriterionResult:
    def body():
        params = Params(SADDLE)
        x, k = Config((1, 0, 0, 0, 0)), 2
        reg = regime(params, x, k)
        rows, ok = [], reg.kind is RegimeKind.PAIR_STICKING_POSSIBLE
        for n in (5, 20, 50):
            est, se = pair_stick_probability_mc(params, x, k, n, samples, seed)
            chain, chain_se = chain_stick_frequency(params, x, (k, k + 1), n + 1, samples, seed + 1)
            combined = math.hypot(se, chain_se)
            good = abs(est - chain) <= 3 * combined
            ok &= good
            rows.append({"n": n, "weights": est, "chain": chain, "combined_se": combined, "ok": good})
        return ok, {"regime": reg.condition, "rows": rows}
    return _timed(4, "path-weight representation vs chain", body)


def criterion_5(seed: int = 0, triples: int = 10_000) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        mismatches = 0
        for _ in range(triples):
            left, right = rng.uniform(0.1, 5.0, size=2)
            lam = rng.uniform(0.0, min(left, right))
            if lam <= 0.0:
                continue
            z1, z2 = z_values(left, lam, right)
            mismatches += (z1 < z2) != (pair_type(left, lam, right) is PairType.TYPE1)
        return mismatches == 0, {"triples": triples, "mismatches": mismatches}
    return _timed(5, "threshold ordering matches pair type", body)


def random_spec(rng: np.random.Generator) -> ZetaSpec:
    return ZetaSpec(
        kind=str(rng.choice(["left", "right"])),
        p=float(rng.uniform(0.05, 0.95)),
        lambda_outer=float(rng.uniform(0.2, 3.0)),
        lam=float(rng.uniform(0.2, 3.0)),
    )


def criterion_6(seed: int = 0, specs: int = 20) -> CriterionResult:
    def body():
        rng = np.random.default_rng(seed)
        failures = []
        for s in range(specs):
            spec = random_spec(rng)
            for n in range(1, 11):
                f_law, z_law = enumerate_Fn_vs_Zn(spec, n)
                if not distributions_match(f_law, z_law, 1e-12):
                    failures.append({"spec": s, "n": n})
        return not failures, {"specs": specs, "max_n": 10, "failures": failures}
    return _timed(6, "normalised sums equal reciprocal sums in law", body)


def criterion_7(seed: int = 0, samples: int = 10_000) -> CriterionResult:
    def body():
        # ordering of E exp(-Z) for two convergent right-side sequences
        low, high = ZetaSpec("right", 0.1, 2.0, 1.0), ZetaSpec("right", 0.3, 2.0, 1.0)
        dom = dominance_check(low, high, samples, seed)

        # stopped progression: gamma * Z_{m-1} <= Z_{m-1} / Y_{m-1}
        gamma, growing = 0.2, ZetaSpec("right", 0.8, 2.0, 1.0)
        violations = 0
        for i in range(samples):
            st = sample_Z_until_stopping(growing, gamma, RngStream(seed + 1, i))
            violations += gamma * st.partial_sum > st.ratio
        # common random numbers: smaller p gives smaller Z_n on every path
        a = partial_sum_paths(ZetaSpec("right", 0.2, 2.0, 1.0), 50, samples, seed + 2)
        b = partial_sum_paths(ZetaSpec("right", 0.4, 2.0, 1.0), 50, samples, seed + 2)
        crossings = int(np.sum(a > b))
        grid = np.quantile(np.concatenate([a, b]), np.linspace(0.01, 0.99, 99))
        cdf_ok = bool(np.all((a[:, None] <= grid).mean(axis=0) >= (b[:, None] <= grid).mean(axis=0)))
        ok = dom.holds and violations == 0 and crossings == 0 and cdf_ok
        return ok, {"dominance": dom.to_dict(), "stopping_violations": violations,
                    "pathwise_crossings": crossings, "cdf_ordered": cdf_ok}
    return _timed(7, "stochastic domination suite", body)


def criterion_8(seed: int = 0, samples: int = 10_000) -> CriterionResult:
    def body():
        params = Params(SADDLE)
        x, k, n = Config((0, 3, 0, 1, 0)), 2, 2000
        drift = pair_rates(params, x, k).drift_right
        reg = regime(params, x, k)
        upper, se = pair_stick_upper_bound_mc(params, x, k, n, samples, seed)
        chain, chain_se = chain_stick_frequency(params, x, (k, k + 1), n + 1, samples, seed + 1)
        ok = (drift >= 0.3 and reg.kind is RegimeKind.ZERO_STICKING and upper < 0.05
              and chain <= upper + 3 * math.hypot(se, chain_se))
        return ok, {"drift": drift, "upper_bound": upper, "se": se, "chain": chain, "chain_se": chain_se}
    return _timed(8, "pair sticking decays when the drift is positive", body)


def random_peak_instance(rng: np.random.Generator) -> tuple[Params, Config, int]:
    """A random landscape with a local maximum ``k`` holding the maximal rate."""
    n = int(rng.integers(4, 9))
    lam = rng.uniform(0.2, 3.0, size=n)
    i = int(rng.integers(n))
    lam[i] = max(lam[i - 1], lam[(i + 1) % n]) + rng.uniform(0.05, 1.0)
    params = Params(lam)
    counts = rng.integers(0, 6, size=n)
    while True:
        ell = log_rates(params, Config(counts))
        if ell[i] >= ell.max():
            break
        counts[i] += 1
    return params, Config(counts), i + 1


def criterion_9(seed: int = 0, runs: int = 1100, instances: int = 1000) -> CriterionResult:
    def body():
        report = certificate_soundness(Params(TWO_MAXIMA), None, runs=runs, steps=20_000, master_seed=seed)
        rng = np.random.default_rng(seed)
        bad = 0
        for _ in range(instances):
            params, x, k = random_peak_instance(rng)
            bad += not escape_bound(params, x, k) >= 1.0 - single_site_stick_probability(params, x, k)
        ok = report.certified >= 1000 and report.deviation_fraction <= 1e-4 and bad == 0
        return ok, {"certified": report.certified, "deviations": report.deviations,
                    "bound_violations": bad, "instances": instances}
    return _timed(9, "certificates are sound", body)


def criterion_10(seed: int = 0) -> CriterionResult:
    from .cli import main

    def body():
        config = {"n_sites": 5, "lambdas": list(TWO_MAXIMA), "steps": 20_000, "runs": 64, "seed": seed}
        outputs, codes = [], []
        saved = os.environ.get("GROWTHLAB_THREADS")
        with tempfile.TemporaryDirectory() as tmp:
            cfg = Path(tmp) / "config.json"
            cfg.write_text(json.dumps(config))
            try:
                for threads in (1, 4, 16, 1):
                    os.environ["GROWTHLAB_THREADS"] = str(threads)
                    out = Path(tmp) / f"out{len(outputs)}"
                    codes.append(main(["simulate", "--config", str(cfg), "--out", str(out), "--quiet"]))
                    outputs.append((out / "runs.csv").read_bytes())
            finally:
                if saved is None:
                    os.environ.pop("GROWTHLAB_THREADS", None)
                else:
                    os.environ["GROWTHLAB_THREADS"] = saved
        identical = all(o == outputs[0] for o in outputs)
        return identical and codes == [0] * 4, {"threads": [1, 4, 16, 1], "identical": identical}
    return _timed(10, "byte-identical CSV across thread counts", body)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_all(seed: int = 0, only=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for number, fn in CRITERIA.items():
        if only and number not in only:
            continue
        res = fn(seed=seed)
        if echo:
            echo(res.line())
        results.append(res)
    return results
