"""Trajectory batches, localisation verdicts and first-exit events."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._validation import check_seed, check_site
from .model import (
    Config,
    Params,
    RngStream,
    StopReason,
    TrajectorySummary,
    _as_config,
    log_rates,
    simulate,
)
from .oracles import escape_bound

__all__ = [
    "VerdictKind",
    "Verdict",
    "ExitKind",
    "FirstExit",
    "PairPersisted",
    "SoundnessReport",
    "RunRecord",
    "BatchReport",
    "CSV_COLUMNS",
    "detect_localization",
    "verdict_from_summary",
    "run_trajectory",
    "first_exit",
    "ratio_drift",
    "run_batch",
    "chain_stick_frequency",
    "certificate_soundness",
    "thread_count",
]

DEFAULT_WINDOW = 2000
DEFAULT_CERT_THRESHOLD = 1e-6
DEFAULT_MAX_STEPS = 100_000

CSV_COLUMNS = (
    "run_id", "seed", "verdict", "site", "certified", "residual_bound",
    "R", "ratio", "predicted_ratio", "steps_executed",
)


class VerdictKind(str, enum.Enum):
    SINGLE_SITE = "SingleSite"
    PAIR = "Pair"
    UNDECIDED = "Undecided"
    OVERFLOW = "Overflow"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    site: int | None = None
    certified: bool = False
    residual_bound: float | None = None
    R: int | None = None
    ratio: float | None = None
    predicted_ratio: float | None = None


def _predicted_ratio(lam: float, r: int) -> float:
    try:
        return math.exp(lam * r)
    except OverflowError:
        return math.inf


def _pair_verdict(params: Params, counts: np.ndarray, k: int) -> Verdict:
    n = params.n_sites
    i = k - 1
    r = int(counts[(i + 2) % n] - counts[i - 1])
    xk, xk1 = counts[i], counts[(i + 1) % n]
    ratio = float(xk1 / xk) if xk > 0 else math.inf
    return Verdict(VerdictKind.PAIR, site=k, R=r, ratio=ratio,
                   predicted_ratio=_predicted_ratio(float(params.lambdas[i]), r))


def _single_verdict(params: Params, counts: np.ndarray, k: int, is_max: bool, cert_threshold: float) -> Verdict:
    if not is_max:
        return Verdict(VerdictKind.SINGLE_SITE, site=k)
    ell = log_rates(params, counts)
    if ell[k - 1] < ell.max():
        return Verdict(VerdictKind.SINGLE_SITE, site=k, residual_bound=math.inf)
    bound = escape_bound(params, counts, k)
    return Verdict(VerdictKind.SINGLE_SITE, site=k, certified=bool(bound < cert_threshold),
                   residual_bound=bound)


def _verdict_from_streaks(params: Params, counts: np.ndarray, last_site: int | None,
                          single_streak: int, pair_streaks: Sequence[int], window: int,
                          cert_threshold: float) -> Verdict:
    n = params.n_sites
    lam = params.lambdas
    is_max = (lam > np.roll(lam, 1)) & (lam > np.roll(lam, -1))
    equal = lam == np.roll(lam, -1)
    if last_site is not None and single_streak >= window:
        k = last_site
        if is_max[k - 1]:
            return _single_verdict(params, counts, k, True, cert_threshold)
        # a lone site inside an equal pair can only be a pair localisation
        candidates = [j for j in ((k - 2) % n, k - 1) if equal[j]]
        if candidates:
            ell = log_rates(params, counts)

            def partner_rate(j):
                partner = (j + 1) % n if j == k - 1 else j
                return ell[partner]

            best = max(candidates, key=lambda j: (partner_rate(j), -j))
            return _pair_verdict(params, counts, best + 1)
        return _single_verdict(params, counts, k, False, cert_threshold)
    for j in range(n):
        if equal[j] and pair_streaks[j] >= window:
            return _pair_verdict(params, counts, j + 1)
    return Verdict(VerdictKind.UNDECIDED)


def detect_localization(params: Params, history: Iterable[int], final: Config,
                        window: int = DEFAULT_WINDOW,
                        cert_threshold: float = DEFAULT_CERT_THRESHOLD) -> Verdict:
    """Verdict from a stream of allocated sites (1-based) and the final counts.

    ``SingleSite(k)`` when the last ``window`` allocations all went to ``k``
    and ``k`` is a local maximum (certified when the escape bound at the
    final counts is below ``cert_threshold``); ``Pair(k)`` when they all went
    to ``{k, k+1}`` with equal ``lambda``.  A streak at a single site that
    sits inside an equal pair is reported as that pair.  Otherwise
    ``Undecided``.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    final = _as_config(final, params.n_sites)
    sites = np.fromiter(history, dtype=np.int64)
    n = params.n_sites
    if sites.size < window:
        return Verdict(VerdictKind.UNDECIDED)
    tail = sites[::-1]
    last = int(tail[0])

    def run_length(mask):
        bad = np.flatnonzero(~mask)
        return int(bad[0]) if bad.size else int(tail.size)

    single = run_length(tail == last)
    pairs = [run_length((tail == j + 1) | (tail == (j + 1) % n + 1)) for j in range(n)]
    return _verdict_from_streaks(params, final.counts, last, single, pairs, window, cert_threshold)


def verdict_from_summary(params: Params, summary: TrajectorySummary, window: int = DEFAULT_WINDOW,
                         cert_threshold: float = DEFAULT_CERT_THRESHOLD) -> Verdict:
    if summary.stop_reason is StopReason.OVERFLOW:
        return Verdict(VerdictKind.OVERFLOW)
    return _verdict_from_streaks(params, summary.final.counts, summary.last_site,
                                 summary.single_streak, summary.pair_streaks, window, cert_threshold)


def run_trajectory(params: Params, x0, steps: int, rng: RngStream, window: int = DEFAULT_WINDOW,
                   cert_threshold: float = DEFAULT_CERT_THRESHOLD, stop_on_detect: bool = True,
                   record_history: bool = False) -> tuple[Verdict, TrajectorySummary]:
    """Simulate one trajectory and classify how it ends."""
    summary = simulate(params, x0, steps, rng, detect_window=window if stop_on_detect else 0,
                       record_history=record_history)
    return verdict_from_summary(params, summary, window, cert_threshold), summary


class ExitKind(str, enum.Enum):
    LEFT = "left"  # first exit at k-1
    RIGHT = "right"  # first exit at k+2; the right neighbour is reached first
    OTHER = "other"


@dataclass(frozen=True)
class FirstExit:
    exit_site: int
    exit_time: int
    kind: ExitKind


@dataclass(frozen=True)
class PairPersisted:
    steps: int


def first_exit(params: Params, x0, k: int, rng: RngStream,
               max_steps: int = DEFAULT_MAX_STEPS) -> FirstExit | PairPersisted:
    """Run until a particle lands outside ``{k, k+1}``.

    The exit is ``LEFT`` at ``k-1``, ``RIGHT`` at ``k+2`` and ``OTHER``
    elsewhere; ``PairPersisted`` if all ``max_steps`` allocations stayed in
    the pair.  Saturation raises ``OverflowError``.
    """
    n = params.n_sites
    k = check_site(k, n)
    pair = (k, k % n + 1)
    summary = simulate(params, x0, max_steps, rng, watch=pair)
    if summary.stop_reason is StopReason.OVERFLOW:
        raise OverflowError("a site count reached the saturation cap")
    if summary.stop_reason is not StopReason.EXITED:
        return PairPersisted(summary.steps_executed)
    s = summary.exit_site
    if s == (k - 2) % n + 1:
        kind = ExitKind.LEFT
    elif s == (k + 1) % n + 1:
        kind = ExitKind.RIGHT
    else:
        kind = ExitKind.OTHER
    return FirstExit(s, summary.steps_executed, kind)


def ratio_drift(params: Params, verdict: Verdict) -> tuple[int, float, float, float]:
    """``(R, ratio, exp(lambda R), |ratio / exp(lambda R) - 1|)`` for a pair verdict."""
    if verdict.kind is not VerdictKind.PAIR:
        raise ValueError(f"ratio_drift needs a Pair verdict, got {verdict.kind.value}")
    predicted = _predicted_ratio(float(params.lambdas[verdict.site - 1]), verdict.R)
    rel = abs(verdict.ratio / predicted - 1.0)
    return verdict.R, verdict.ratio, predicted, rel


@dataclass(frozen=True)
class RunRecord:
    run_id: int
    seed: int
    verdict: Verdict
    steps_executed: int
    final: Config

    def row(self) -> dict:
        v = self.verdict
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "verdict": v.kind.value,
            "site": v.site,
            "certified": v.certified if v.kind is VerdictKind.SINGLE_SITE else None,
            "residual_bound": v.residual_bound,
            "R": v.R,
            "ratio": v.ratio,
            "predicted_ratio": v.predicted_ratio,
            "steps_executed": self.steps_executed,
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


@dataclass(frozen=True)
class BatchReport:
    params: Params
    master_seed: int
    steps: int
    window: int
    cert_threshold: float
    records: tuple[RunRecord, ...]

    @property
    def runs(self) -> int:
        return len(self.records)

    @property
    def verdict_histogram(self) -> dict[str, int]:
        return dict(sorted(Counter(r.verdict.kind.value for r in self.records).items()))

    @property
    def site_histogram(self) -> dict[str, int]:
        c = Counter(
            f"{r.verdict.kind.value}:{r.verdict.site}"
            for r in self.records if r.verdict.site is not None
        )
        return dict(sorted(c.items()))

    @property
    def r_histogram(self) -> dict[str, int]:
        c = Counter(r.verdict.R for r in self.records if r.verdict.R is not None)
        return {str(k): v for k, v in sorted(c.items())}

    @property
    def mean_ratio_error(self) -> float | None:
        errs = [
            abs(r.verdict.ratio - r.verdict.predicted_ratio)
            for r in self.records
            if r.verdict.kind is VerdictKind.PAIR
            and math.isfinite(r.verdict.ratio) and math.isfinite(r.verdict.predicted_ratio)
        ]
        return float(math.fsum(errs) / len(errs)) if errs else None

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "lambdas": self.params.lambdas.tolist(),
            "steps": self.steps,
            "window": self.window,
            "cert_threshold": self.cert_threshold,
            "verdicts": self.verdict_histogram,
            "sites": self.site_histogram,
            "R": self.r_histogram,
            "certified": int(sum(r.verdict.certified for r in self.records)),
            "mean_abs_ratio_error": self.mean_ratio_error,
            "seeds": {"master_seed": self.master_seed, "streams": [0, self.runs - 1]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            row = r.row()
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def thread_count(n_jobs: int | None = None) -> int:
    """``n_jobs`` if given, otherwise ``GROWTHLAB_THREADS`` (default 1)."""
    if n_jobs is None:
        n_jobs = int(os.environ.get("GROWTHLAB_THREADS", "1"))
    return max(1, int(n_jobs))


def run_batch(params: Params, x0=None, runs: int = 100, steps: int = DEFAULT_MAX_STEPS,
              master_seed: int = 0, window: int = DEFAULT_WINDOW,
              cert_threshold: float = DEFAULT_CERT_THRESHOLD, stop_on_detect: bool = True,
              n_jobs: int | None = None) -> BatchReport:
    """Independent trajectories on streams ``(master_seed, 0..runs-1)``.

    Runs are distributed over a thread pool (the simulation kernel releases
    the GIL); results are collected by run index so the report does not
    depend on the number of threads.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    master_seed = check_seed(master_seed)
    x0 = _as_config(x0, params.n_sites)

    def one(run_id: int) -> RunRecord:
        verdict, summary = run_trajectory(params, x0, steps, RngStream(master_seed, run_id),
                                          window, cert_threshold, stop_on_detect)
        return RunRecord(run_id, master_seed, verdict, summary.steps_executed, summary.final)

    workers = thread_count(n_jobs)
    if workers == 1:
        records = [one(i) for i in range(runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(runs)))
    return BatchReport(params, master_seed, steps, window, cert_threshold, tuple(records))


def chain_stick_frequency(params: Params, x0, sites: Sequence[int], n_steps: int, runs: int,
                          seed: int = 0) -> tuple[float, float]:
    """Fraction of chain runs whose first ``n_steps`` allocations stay in ``sites``.

    Direct simulation of the chain, used to cross-check the analytic
    sticking probabilities.  Returns the estimate and its standard error.
    """
    x0 = _as_config(x0, params.n_sites)
    hits = 0
    for i in range(runs):
        s = simulate(params, x0, n_steps, RngStream(seed, i), watch=sites)
        hits += s.stop_reason is StopReason.COMPLETED
    est = hits / runs
    return est, math.sqrt(est * (1.0 - est) / runs)


@dataclass(frozen=True)
class SoundnessReport:
    runs: int
    certified: int
    deviations: int
    extension_factor: int

    @property
    def deviation_fraction(self) -> float:
        return self.deviations / self.certified if self.certified else 0.0


def certificate_soundness(params: Params, x0=None, runs: int = 1000, steps: int = 20_000,
                          master_seed: int = 0, window: int = DEFAULT_WINDOW,
                          cert_threshold: float = DEFAULT_CERT_THRESHOLD,
                          extension_factor: int = 10) -> SoundnessReport:
    """Extend every certified single-site run and count departures.

    A run certified after ``t`` steps continues on its own stream for
    ``extension_factor * t`` further steps while watching the certified
    site.
    """
    x0 = _as_config(x0, params.n_sites)
    certified = deviations = 0
    for i in range(runs):
        rng = RngStream(master_seed, i)
        verdict, summary = run_trajectory(params, x0, steps, rng, window, cert_threshold)
        if verdict.kind is not VerdictKind.SINGLE_SITE or not verdict.certified:
            continue
        certified += 1
        more = simulate(params, summary.final, extension_factor * summary.steps_executed, rng,
                        watch=(verdict.site,))
        deviations += more.stop_reason is StopReason.EXITED
    return SoundnessReport(runs, certified, deviations, extension_factor)
