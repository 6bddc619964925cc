"""Random geometric progressions driven by Bernoulli streams.

For an i.i.d. positive sequence ``zeta`` put ``Y_0 = 1``,
``Y_i = zeta_1 * ... * zeta_i`` and ``Z_n = Y_0 + ... + Y_n``; ``Z`` is the
limit.  The sequences used around an equal-``lambda`` pair take two
values, ``log zeta = offset + slope * xi`` with ``xi ~ Bernoulli(p)``:

``left``   ``log zeta = lambda_out * (1 - xi) - lambda``
``right``  ``log zeta = lambda_out * xi - lambda``

and the reciprocal of a sequence negates its log terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ._validation import check_positive, check_probability
from .model import RngStream

__all__ = [
    "ZetaSpec",
    "ProgressionSample",
    "StoppedProgression",
    "DominanceReport",
    "EnvelopeReport",
    "DivergentSpecError",
    "TruncationUnresolvedError",
    "expected_log",
    "reciprocal",
    "term_distribution",
    "partial_sums",
    "sum_progression",
    "sample_Z",
    "sample_Z_many",
    "stop_progression",
    "sample_Z_until_stopping",
    "enumerate_Fn_vs_Zn",
    "distributions_match",
    "partial_sum_paths",
    "dominance_check",
    "envelope_margins",
    "binomial_envelope_check",
]

MAX_ENUMERATION_TERMS = 16


class DivergentSpecError(ValueError):
    """The progression does not converge (non-negative log drift)."""


class TruncationUnresolvedError(RuntimeError):
    """``max_terms`` was reached before the tail estimate fell below tolerance."""


@dataclass(frozen=True)
class ZetaSpec:
    kind: str
    p: float
    lambda_outer: float
    lam: float
    reciprocal: bool = False

    def __post_init__(self):
        if self.kind not in ("left", "right"):
            raise ValueError(f"kind must be 'left' or 'right', got {self.kind!r}")
        object.__setattr__(self, "p", check_probability(self.p))
        object.__setattr__(self, "lambda_outer", check_positive(self.lambda_outer, "lambda_outer"))
        object.__setattr__(self, "lam", check_positive(self.lam, "lambda"))

    @property
    def offset(self) -> float:
        base = self.lambda_outer - self.lam if self.kind == "left" else -self.lam
        return -base if self.reciprocal else base

    @property
    def slope(self) -> float:
        base = -self.lambda_outer if self.kind == "left" else self.lambda_outer
        return -base if self.reciprocal else base

    @property
    def sd_log(self) -> float:
        return abs(self.slope) * math.sqrt(self.p * (1.0 - self.p))

    def log_terms(self, xi) -> np.ndarray:
        return self.offset + self.slope * np.asarray(xi, dtype=np.float64)

    def with_p(self, p: float) -> "ZetaSpec":
        return replace(self, p=p)


def expected_log(spec: ZetaSpec) -> float:
    """``E log zeta``; negative means ``Z`` is finite almost surely."""
    if spec.kind == "left":
        base = spec.lambda_outer * (1.0 - spec.p) - spec.lam
    else:
        base = spec.lambda_outer * spec.p - spec.lam
    return -base if spec.reciprocal else base


def reciprocal(spec: ZetaSpec) -> ZetaSpec:
    """Spec of the sequence distributed as ``1 / zeta``."""
    return replace(spec, reciprocal=not spec.reciprocal)


def term_distribution(spec: ZetaSpec) -> list[tuple[float, float]]:
    """The two (value, probability) atoms of a single term."""
    return [
        (math.exp(spec.offset), 1.0 - spec.p),
        (math.exp(spec.offset + spec.slope), spec.p),
    ]


def partial_sums(log_zeta) -> np.ndarray:
    """``Z_0, ..., Z_n`` for one path given ``log zeta_1..log zeta_n``."""
    log_y = np.concatenate(([0.0], np.cumsum(np.asarray(log_zeta, dtype=np.float64))))
    return np.cumsum(np.exp(log_y))


@dataclass(frozen=True)
class ProgressionSample:
    value: float
    terms_used: int
    truncation_error_bound: float


def sum_progression(next_logs, mean_log: float, sd_log: float, tail_epsilon: float = 1e-9,
                    max_terms: int = 1_000_000) -> ProgressionSample:
    """Sum a progression until its estimated tail is below ``tail_epsilon``.

    ``next_logs(m)`` must return the next ``m`` log terms of the path.  After
    ``i`` terms the contraction factor is estimated as
    ``c = exp(mean_log + 3 * sd_log / sqrt(i))``; summation stops once
    ``c < 1`` and ``Y_i / (1 - c) < tail_epsilon``.  The reported error bound
    is the geometric tail ``Y_i * c / (1 - c)``.
    """
    if mean_log >= 0:
        raise DivergentSpecError(f"log drift {mean_log} is not negative")
    total = 1.0
    log_y = 0.0
    i = 0
    block = 64
    while i < max_terms:
        m = min(block, max_terms - i)
        logs = np.asarray(next_logs(m), dtype=np.float64)
        ly = log_y + np.cumsum(logs)
        idx = np.arange(i + 1, i + m + 1)
        c = np.exp(mean_log + 3.0 * sd_log / np.sqrt(idx))
        with np.errstate(divide="ignore", over="ignore"):
            majorant = np.where(c < 1.0, np.exp(ly) / (1.0 - c), np.inf)
        stop = np.flatnonzero(majorant < tail_epsilon)
        if stop.size:
            s = stop[0]
            y = np.exp(ly[: s + 1])
            total += float(y.sum())
            bound = float(y[-1] * c[s] / (1.0 - c[s]))
            return ProgressionSample(total, int(idx[s]), bound)
        total += float(np.exp(ly).sum())
        log_y = float(ly[-1])
        i += m
        block = min(block * 2, 65536)
    raise TruncationUnresolvedError(f"tail above {tail_epsilon} after {max_terms} terms")


def _bernoulli_logs(spec: ZetaSpec, rng: RngStream):
    def next_logs(m):
        return spec.log_terms(rng.uniforms(m) < spec.p)
    return next_logs


def sample_Z(spec: ZetaSpec, rng: RngStream, tail_epsilon: float = 1e-9,
             max_terms: int = 1_000_000) -> ProgressionSample:
    """One truncated realisation of ``Z`` for a convergent spec."""
    mu = expected_log(spec)
    if mu >= 0:
        raise DivergentSpecError(f"E log zeta = {mu} >= 0; Z diverges")
    return sum_progression(_bernoulli_logs(spec, rng), mu, spec.sd_log, tail_epsilon, max_terms)


def sample_Z_many(spec: ZetaSpec, samples: int, seed: int = 0, tail_epsilon: float = 1e-9,
                  max_terms: int = 1_000_000) -> np.ndarray:
    """Sample ``i`` uses stream ``(seed, i)``; specs sharing a seed are coupled."""
    return np.array([
        sample_Z(spec, RngStream(seed, i), tail_epsilon, max_terms).value
        for i in range(samples)
    ])


@dataclass(frozen=True)
class StoppedProgression:
    m_hat: int
    partial_sum: float  # Z_{m_hat - 1}
    last_product: float  # Y_{m_hat - 1}
    stopped_product: float  # Y_{m_hat}

    @property
    def ratio(self) -> float:
        """``Z_{m_hat-1} / Y_{m_hat-1}``."""
        return self.partial_sum / self.last_product


def stop_progression(next_logs, gamma: float, max_terms: int = 1_000_000) -> StoppedProgression:
    """Run ``Y_n`` until ``gamma * Y_n >= 1`` and report the stopped sums."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    threshold = -math.log(gamma)
    total, log_y, i, block = 0.0, 0.0, 0, 64
    while i < max_terms:
        m = min(block, max_terms - i)
        ly = np.concatenate(([log_y], log_y + np.cumsum(np.asarray(next_logs(m), dtype=np.float64))))
        hit = np.flatnonzero(ly[1:] >= threshold)
        if hit.size:
            j = hit[0]
            total += float(np.exp(ly[: j + 1]).sum())
            return StoppedProgression(i + j + 1, total, math.exp(ly[j]), math.exp(ly[j + 1]))
        total += float(np.exp(ly[:-1]).sum())
        log_y = float(ly[-1])
        i += m
        block = min(block * 2, 65536)
    raise TruncationUnresolvedError(f"gamma * Y_n < 1 for all n <= {max_terms}")


def sample_Z_until_stopping(spec: ZetaSpec, gamma: float, rng: RngStream,
                            max_terms: int = 1_000_000) -> StoppedProgression:
    """Stopped progression for a spec with positive log drift."""
    mu = expected_log(spec)
    if mu <= 0:
        raise ValueError(f"E log zeta = {mu} <= 0; the stopping time may be infinite")
    return stop_progression(_bernoulli_logs(spec, rng), gamma, max_terms)


def _merge_atoms(values: np.ndarray, weights: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    values, weights = values[order], weights[order]
    out_v, out_w = [values[0]], [weights[0]]
    for v, w in zip(values[1:], weights[1:]):
        if abs(v - out_v[-1]) <= tol * max(1.0, abs(v)):
            out_w[-1] += w
        else:
            out_v.append(v)
            out_w.append(w)
    return np.array(out_v), np.array(out_w)


def enumerate_Fn_vs_Zn(spec: ZetaSpec, n: int, tol: float = 1e-12):
    """Exact laws of ``Z_n / Y_n`` for ``spec`` and of ``Z_n`` for its reciprocal.

    Enumerates all ``2**n`` Bernoulli paths.  Each law is returned as
    ``(values, weights)`` with atoms closer than ``tol`` (relative for
    values above 1) merged.
    """
    if not 1 <= n <= MAX_ENUMERATION_TERMS:
        raise ValueError(f"n must lie in 1..{MAX_ENUMERATION_TERMS} for exhaustive enumeration")
    paths = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    ones = paths.sum(axis=1)
    weights = spec.p**ones * (1.0 - spec.p) ** (n - ones)

    log_zeta = spec.log_terms(paths)
    log_y = np.concatenate([np.zeros((2**n, 1)), np.cumsum(log_zeta, axis=1)], axis=1)
    f_n = np.exp(log_y).sum(axis=1) / np.exp(log_y[:, -1])

    eta = reciprocal(spec)
    log_eta = eta.log_terms(paths)
    z_eta = np.exp(np.concatenate([np.zeros((2**n, 1)), np.cumsum(log_eta, axis=1)], axis=1)).sum(axis=1)
    return _merge_atoms(f_n, weights, tol), _merge_atoms(z_eta, weights, tol)


def distributions_match(a, b, tol: float = 1e-12) -> bool:
    (va, wa), (vb, wb) = a, b
    if va.shape != vb.shape:
        return False
    scale = np.maximum(1.0, np.abs(va))
    return bool(np.all(np.abs(va - vb) <= tol * scale) and np.all(np.abs(wa - wb) <= tol))


def partial_sum_paths(spec: ZetaSpec, n: int, samples: int, seed: int = 0) -> np.ndarray:
    """``Z_n`` on ``samples`` paths; the uniforms depend only on ``seed``.

    Two specs evaluated with the same seed are coupled through common
    Bernoulli thresholds (``xi = u < p``), which orders their terms path by
    path.
    """
    u = RngStream(seed, 0).generator.random((samples, n))
    log_y = np.cumsum(spec.log_terms(u < spec.p), axis=1)
    return 1.0 + np.exp(log_y).sum(axis=1)


def _st_direction(a: ZetaSpec, b: ZetaSpec) -> int:
    """+1 if ``zeta_a >=_st zeta_b``, -1 if ``<=``, 0 if equal in law."""
    if a.p == b.p:
        return 0
    # right terms increase with xi; left terms decrease with xi
    up = 1 if a.p > b.p else -1
    sign = up if a.kind == "right" else -up
    return -sign if a.reciprocal else sign


@dataclass(frozen=True)
class DominanceReport:
    estimate_a: float
    se_a: float
    estimate_b: float
    se_b: float
    se_difference: float
    predicted: str
    holds: bool
    used_reciprocal: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dominance_check(spec_a: ZetaSpec, spec_b: ZetaSpec, samples: int = 10_000, seed: int = 0,
                    tail_epsilon: float = 1e-9, max_terms: int = 1_000_000) -> DominanceReport:
    """Compare ``E exp(-Z)`` for two specs against their stochastic ordering.

    Specs must share kind and parameters apart from ``p``.  If both have
    positive drift the comparison is made for their reciprocal sequences,
    which converge.  Samples are coupled through common random numbers and
    the ordering is accepted when it holds within three standard errors of
    the paired difference.
    """
    if (spec_a.kind, spec_a.lambda_outer, spec_a.lam, spec_a.reciprocal) != (
        spec_b.kind, spec_b.lambda_outer, spec_b.lam, spec_b.reciprocal
    ):
        raise ValueError("specs must differ only in p")
    mu_a, mu_b = expected_log(spec_a), expected_log(spec_b)
    used_reciprocal = False
    if mu_a > 0 and mu_b > 0:
        spec_a, spec_b = reciprocal(spec_a), reciprocal(spec_b)
        used_reciprocal = True
    elif mu_a >= 0 or mu_b >= 0:
        raise DivergentSpecError("one of the specs diverges and the other does not")

    za = sample_Z_many(spec_a, samples, seed, tail_epsilon, max_terms)
    zb = sample_Z_many(spec_b, samples, seed, tail_epsilon, max_terms)
    ea, eb = np.exp(-za), np.exp(-zb)
    sqrt_n = math.sqrt(samples)
    se_a = float(ea.std(ddof=1) / sqrt_n)
    se_b = float(eb.std(ddof=1) / sqrt_n)
    se_d = float((ea - eb).std(ddof=1) / sqrt_n)
    diff = float(ea.mean() - eb.mean())

    # Z increases with zeta, so exp(-Z) reverses the ordering of the terms
    direction = -_st_direction(spec_a, spec_b)
    if direction > 0:
        predicted, holds = "a>=b", diff >= -3 * se_d
    elif direction < 0:
        predicted, holds = "a<=b", diff <= 3 * se_d
    else:
        predicted, holds = "a==b", abs(diff) <= 3 * se_d
    return DominanceReport(float(ea.mean()), se_a, float(eb.mean()), se_b, se_d,
                           predicted, bool(holds), used_reciprocal)


def envelope_margins(p: float, kappa: float, horizon: int, samples: int, seed: int = 0,
                     chunk: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Per path, the smallest ``c1`` and ``c2`` that keep the binomial walk enveloped.

    The envelope is ``n p (1 - kappa) / 2 - c1 <= U_n <= n p (1 + kappa) + c2``
    for every ``floor(1/p) <= n <= horizon``.
    """
    p = check_probability(p)
    kappa = check_positive(kappa, "kappa")
    start = max(1, int(1.0 / p))
    if horizon < start:
        raise ValueError(f"horizon must be at least floor(1/p) = {start}")
    n = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    lower = n * p * (1.0 - kappa) / 2.0
    upper = n * p * (1.0 + kappa)
    c1_all, c2_all = [], []
    for c, lo in enumerate(range(0, samples, chunk)):
        m = min(chunk, samples - lo)
        u = np.cumsum(RngStream(seed, c).generator.random((horizon, m)) < p, axis=0)
        c1_all.append((lower - u)[start - 1:].max(axis=0))
        c2_all.append((u - upper)[start - 1:].max(axis=0))
    return np.concatenate(c1_all), np.concatenate(c2_all)


@dataclass(frozen=True)
class EnvelopeReport:
    kappa: float
    epsilon: float
    horizon: int
    samples: int
    constant: float | None
    coverage: dict[float, dict[float, float]]

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "epsilon": self.epsilon,
            "horizon": self.horizon,
            "samples": self.samples,
            "c1": self.constant,
            "c2": self.constant,
            "found": self.constant is not None,
            "coverage": {str(p): {str(c): v for c, v in row.items()} for p, row in self.coverage.items()},
        }


def binomial_envelope_check(p: float | Sequence[float], kappa: float, epsilon: float, horizon: int,
                            samples: int = 1000, seed: int = 0,
                            grid: Sequence[float] = (1, 2, 4, 8, 16)) -> EnvelopeReport:
    """Search ``c1 = c2`` on ``grid`` so that the envelope holds with probability ``>= epsilon``.

    Coverage is estimated on the same paths for every grid value, so it is
    non-decreasing along the grid.  The reported constant is the smallest
    grid value that reaches ``epsilon`` at every ``p``; ``None`` if none does.
    """
    epsilon = check_probability(epsilon, "epsilon")
    ps = [float(p)] if np.isscalar(p) else [float(v) for v in p]
    coverage: dict[float, dict[float, float]] = {}
    for q in ps:
        c1, c2 = envelope_margins(q, kappa, horizon, samples, seed)
        coverage[q] = {float(c): float(np.mean((c1 <= c) & (c2 <= c))) for c in grid}
    found = None
    for c in grid:
        if all(coverage[q][float(c)] >= epsilon for q in ps):
            found = float(c)
            break
    return EnvelopeReport(float(kappa), epsilon, int(horizon), int(samples), found, coverage)
