"""Exact and semi-exact probabilities for sticking at a site or a pair.

Single site ``k`` (a local maximum holding the maximal rate): the chance
that every future particle lands at ``k`` is an infinite product whose
excess terms decay geometrically, so it can be evaluated to any tolerance.
The sum of those excess terms is a closed-form upper bound on escaping.

Pair ``{k, k+1}`` with equal ``lambda``: while particles stay in the pair
the only randomness is which member receives them, a Bernoulli(p) stream
with ``p = p(r)``.  The probability that the first ``n + 1`` particles stay
in the pair is the Bernoulli-path expectation of a product of weights,
estimated here by Monte Carlo over paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive, check_site
from .landscape import p_of, r_of
from .model import Config, Params, RngStream, _as_config, log_rates

__all__ = [
    "PairRates",
    "RelocationTimes",
    "pair_rates",
    "single_site_stick_probability",
    "escape_bound",
    "pair_path_weights",
    "pair_stick_probability_mc",
    "pair_stick_upper_bound_mc",
    "pair_stick_lower_factor_mc",
    "relocation_stopping_time",
]

_EPS = np.finfo(np.float64).eps
CHUNK = 1000


def _logsumexp(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return -math.inf
    m = v.max()
    if m == -math.inf:
        return -math.inf
    return float(m + math.log(np.exp(v - m).sum()))


def _site_terms(params: Params, config: Config, k: int):
    """Log ratios and decay rates of the three excess terms around site ``k``."""
    config = _as_config(config, params.n_sites)
    n = params.n_sites
    k = check_site(k, n)
    lam = params.lambdas
    i = k - 1
    left, right = (i - 1) % n, (i + 1) % n
    if not lam[i] > max(lam[left], lam[right]):
        raise ValueError(f"site {k} is not a local maximum")
    ell = log_rates(params, config)
    if ell[i] < ell.max():
        raise ValueError(f"the maximal rate is not attained at site {k}")
    others = [j for j in range(n) if j not in (i, left, right)]
    log_coef = np.array([
        ell[left] - ell[i],
        ell[right] - ell[i],
        _logsumexp(ell[others]) - ell[i],
    ])
    decay = np.array([lam[i] - lam[left], lam[i] - lam[right], lam[i]])
    return log_coef, decay


def escape_bound(params: Params, config: Config, k: int) -> float:
    """Upper bound on the chance that some future particle leaves site ``k``.

    Sum of the three geometric series of excess terms.  The result is
    rounded outward so that it stays a valid bound in floating point; it
    may exceed 1, in which case it says nothing.
    """
    log_coef, decay = _site_terms(params, config, k)
    total = float(np.sum(np.exp(log_coef) / -np.expm1(-decay)))
    return total * (1.0 + 4 * _EPS)


def single_site_stick_probability(params: Params, config: Config, k: int, tol: float = 1e-10) -> float:
    """Probability that every subsequent particle is placed at site ``k``.

    The product is summed in log space and truncated once the geometric
    tail of the remaining excess terms is below ``tol``, which bounds the
    absolute error.  Truncation and the final rounding both err upward, so
    the value never understates the true probability.
    """
    tol = check_positive(tol, "tol")
    log_coef, decay = _site_terms(params, config, k)
    tail_factor = 1.0 / -np.expm1(-decay)
    log_deficit = 0.0
    n = 0
    while True:
        terms = np.exp(log_coef - decay * n)
        # remaining sum of log1p(...) over m >= n is at most sum of terms' tails
        if float(np.sum(terms * tail_factor)) < tol:
            break
        log_deficit += math.log1p(float(terms.sum()))
        n += 1
    prob = math.exp(-log_deficit)
    return min(1.0, math.nextafter(prob, math.inf))


@dataclass(frozen=True)
class PairRates:
    """Rates around the pair, relative to the pair's combined rate (log scale)."""

    k: int
    log_gamma_left: float
    log_gamma_right: float
    log_gamma_rest: float
    p: float
    lambda_left: float
    lam: float
    lambda_right: float

    @property
    def gamma_left(self) -> float:
        return math.exp(self.log_gamma_left)

    @property
    def gamma_right(self) -> float:
        return math.exp(self.log_gamma_right)

    @property
    def gamma_rest(self) -> float:
        return math.exp(self.log_gamma_rest)

    @property
    def drift_right(self) -> float:
        """Mean log growth of the right neighbour's rate relative to the pair."""
        return self.lambda_right * self.p - self.lam

    @property
    def drift_left(self) -> float:
        return self.lambda_left * (1.0 - self.p) - self.lam


def pair_rates(params: Params, config: Config, k: int, *, require_max: bool = True) -> PairRates:
    config = _as_config(config, params.n_sites)
    n = params.n_sites
    k = check_site(k, n)
    lam = params.lambdas
    i, j = k - 1, k % n
    if lam[i] != lam[j]:
        raise ValueError(f"sites {k} and {j + 1} do not have equal lambda")
    ell = log_rates(params, config)
    if require_max and max(ell[i], ell[j]) < ell.max():
        raise ValueError(f"the maximal rate is not attained on pair {{{k}, {j + 1}}}")
    left, right = (i - 1) % n, (i + 2) % n
    pair = float(np.logaddexp(ell[i], ell[j]))
    rest = [s for s in range(n) if s not in (left, i, j, right)]
    return PairRates(
        k=k,
        log_gamma_left=float(ell[left] - pair),
        log_gamma_right=float(ell[right] - pair),
        log_gamma_rest=_logsumexp(ell[rest]) - pair,
        p=p_of(lam[i], r_of(config, k)),
        lambda_left=float(lam[left]),
        lam=float(lam[i]),
        lambda_right=float(lam[right]),
    )


def _path_chunks(n: int, samples: int, p: float, seed: int):
    """Cumulative Bernoulli counts ``U_0..U_n`` for blocks of paths.

    Chunk ``c`` draws its steps row by row from stream ``(seed, c)``, so the
    first ``n`` steps of a path do not depend on the horizon: estimates for
    different ``n`` share random numbers.
    """
    for c, lo in enumerate(range(0, samples, CHUNK)):
        m = min(CHUNK, samples - lo)
        rng = RngStream(seed, c)
        xi = rng.generator.random((n, CHUNK))[:, :m] < p
        u = np.zeros((n + 1, m), dtype=np.int64)
        np.cumsum(xi, axis=0, out=u[1:])
        yield u


def pair_path_weights(params: Params, config: Config, k: int, n: int, samples: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Per-path weights for the pair ``{k, k+1}`` over ``n + 1`` steps.

    Returns arrays (one entry per Bernoulli path) under the keys

    ``exact``  the product whose mean is the probability that the first
               ``n + 1`` particles land in the pair;
    ``upper``  the same product without the remote-sites term (an upper
               bound, path by path);
    ``lower``  ``exp(-g1 * sum_left - g2 * sum_right)``, the lower-bound
               factor without its unspecified multiplicative constant.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    pr = pair_rates(params, config, k)
    i_idx = np.arange(n + 1, dtype=np.float64)[:, None]
    exact, upper, lower = [], [], []
    for u in _path_chunks(n, samples, pr.p, seed):
        x_left = pr.lambda_left * (i_idx - u) - pr.lam * i_idx
        x_right = pr.lambda_right * u - pr.lam * i_idx
        a = pr.log_gamma_left + x_left
        b = pr.log_gamma_right + x_right
        up = np.logaddexp(0.0, np.logaddexp(a, b))
        if pr.log_gamma_rest == -math.inf:
            full = up
        else:
            full = np.logaddexp(up, pr.log_gamma_rest - pr.lam * i_idx)
        exact.append(np.exp(-full.sum(axis=0)))
        upper.append(np.exp(-up.sum(axis=0)))
        with np.errstate(over="ignore"):
            s = pr.gamma_left * np.exp(x_left).sum(axis=0) + pr.gamma_right * np.exp(x_right).sum(axis=0)
        lower.append(np.exp(-s))
    return {
        "exact": np.concatenate(exact),
        "upper": np.concatenate(upper),
        "lower": np.concatenate(lower),
    }


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def pair_stick_probability_mc(params, config, k, n, samples=10_000, seed=0) -> tuple[float, float]:
    """Estimate and standard error of P(first ``n + 1`` particles land in the pair)."""
    return _mean_se(pair_path_weights(params, config, k, n, samples, seed)["exact"])


def pair_stick_upper_bound_mc(params, config, k, n, samples=10_000, seed=0) -> tuple[float, float]:
    """Estimate of the upper bound obtained by dropping the remote-sites term."""
    return _mean_se(pair_path_weights(params, config, k, n, samples, seed)["upper"])


def pair_stick_lower_factor_mc(params, config, k, n, samples=10_000, seed=0) -> tuple[float, float]:
    """Estimate of the lower-bound expectation factor.

    The true lower bound is this factor times a positive constant that is
    not computed here.
    """
    return _mean_se(pair_path_weights(params, config, k, n, samples, seed)["lower"])


@dataclass(frozen=True)
class RelocationTimes:
    """First times a neighbour's rate overtakes the pair's combined rate.

    ``None`` means the side was not examined (non-positive drift) or was
    not reached within ``max_steps``.
    """

    left: int | None
    right: int | None

    @property
    def first(self) -> int | None:
        times = [t for t in (self.left, self.right) if t is not None]
        return min(times) if times else None

    @property
    def side(self) -> str | None:
        if self.first is None:
            return None
        return "right" if self.right == self.first else "left"


def relocation_stopping_time(params: Params, config: Config, k: int, rng: RngStream, max_steps: int = 1_000_000) -> RelocationTimes:
    """Sample the relocation times along one Bernoulli path.

    ``S_n`` counts pair allocations that went to ``k + 1``.  The right time
    is the first ``n`` with ``log g_right + lambda_right * S_n - lambda * n >= 0``
    and the left time uses ``n - S_n`` and ``lambda_left`` symmetrically.
    Sides whose drift is not positive are skipped; if neither side has
    positive drift the times may be infinite and the call is rejected.
    """
    pr = pair_rates(params, config, k, require_max=False)
    use_right = pr.drift_right > 0
    use_left = pr.drift_left > 0
    if not (use_left or use_right):
        raise ValueError("both side drifts are non-positive; relocation time may be infinite")
    found = {"left": None, "right": None}
    if use_right and pr.log_gamma_right >= 0:
        found["right"] = 0
    if use_left and pr.log_gamma_left >= 0:
        found["left"] = 0
    pending = [s for s, on in (("left", use_left), ("right", use_right)) if on and found[s] is None]
    s_prev, done = 0, 0
    while pending and done < max_steps:
        m = min(4096, max_steps - done)
        xi = rng.uniforms(m) < pr.p
        s = s_prev + np.cumsum(xi)
        steps = done + np.arange(1, m + 1)
        for side in list(pending):
            if side == "right":
                level = pr.log_gamma_right + pr.lambda_right * s - pr.lam * steps
            else:
                level = pr.log_gamma_left + pr.lambda_left * (steps - s) - pr.lam * steps
            hit = np.flatnonzero(level >= 0)
            if hit.size:
                found[side] = int(steps[hit[0]])
                pending.remove(side)
        s_prev = int(s[-1])
        done += m
    return RelocationTimes(left=found["left"], right=found["right"])
