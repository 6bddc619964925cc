"""Growth chain on a cycle graph.

The state is the vector of particle counts ``x``.  Site ``i`` has rate
``exp(lambda_i * u_i)`` where ``u_i = x_{i-1} + x_i + x_{i+1}`` (indices
modulo ``N``) and the next particle is placed at ``i`` with probability
proportional to that rate.  Rates are never materialised: everything is
carried as log-rates and normalised with the max-subtraction trick.

Site labels in the public API are 1-based, matching the usual way the
model is written down; arrays are ordinary 0-based numpy vectors.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from ._validation import COUNT_CAP, check_counts, check_lambdas, check_seed, check_site

__all__ = [
    "Params",
    "Config",
    "RngStream",
    "SaturationError",
    "StopReason",
    "TrajectorySummary",
    "neighborhood_count",
    "neighborhood_counts",
    "log_rates",
    "transition_probabilities",
    "step",
    "simulate",
]

BLOCK_SIZE = 4096

_EXHAUSTED = 0
_DETECTED = 1
_EXITED = 2
_OVERFLOW = 3


class SaturationError(OverflowError):
    """A site count reached the 2**40 saturation cap."""


@dataclass(frozen=True, eq=False)
class Params:
    """Cycle size and per-site reinforcement parameters."""

    lambdas: np.ndarray

    def __init__(self, lambdas, n_sites: int | None = None):
        object.__setattr__(self, "lambdas", check_lambdas(lambdas, n_sites))

    @property
    def n_sites(self) -> int:
        return self.lambdas.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Params):
            return NotImplemented
        return np.array_equal(self.lambdas, other.lambdas)

    def __hash__(self):
        return hash(self.lambdas.tobytes())

    def __repr__(self):
        return f"Params(lambdas={self.lambdas.tolist()})"


@dataclass(frozen=True, eq=False)
class Config:
    """Particle counts, one per site."""

    counts: np.ndarray

    def __init__(self, counts, n_sites: int | None = None):
        object.__setattr__(self, "counts", check_counts(counts, n_sites))

    @classmethod
    def zeros(cls, n_sites: int) -> "Config":
        return cls(np.zeros(n_sites, dtype=np.int64))

    @property
    def n_sites(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __getitem__(self, site: int) -> int:
        """Count at the 1-based ``site``; wraps around the cycle."""
        return int(self.counts[(site - 1) % self.n_sites])

    def add(self, site: int, amount: int = 1) -> "Config":
        x = self.counts.copy()
        x[(site - 1) % self.n_sites] += amount
        return Config(x)

    def __eq__(self, other):
        if not isinstance(other, Config):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(self.counts.tobytes())

    def __repr__(self):
        return f"Config({self.counts.tolist()})"


def _as_config(config, n_sites: int) -> Config:
    if config is None:
        return Config.zeros(n_sites)
    if not isinstance(config, Config):
        config = Config(config)
    if config.n_sites != n_sites:
        raise ValueError(
            f"config has {config.n_sites} sites but params has {n_sites}"
        )
    return config


class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_index)``.

    Each stream is a Philox generator seeded from a ``SeedSequence`` whose
    spawn key is the stream index, so trajectory ``i`` of a batch sees the
    same numbers whatever order the batch is executed in.
    """

    def __init__(self, master_seed: int = 0, stream_index: int = 0):
        self.master_seed = check_seed(master_seed)
        self.stream_index = check_seed(stream_index)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def uniform(self) -> float:
        return float(self.generator.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self.generator.random(n)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index})"


def neighborhood_counts(counts) -> np.ndarray:
    """Vector of ``x_{i-1} + x_i + x_{i+1}`` for every site."""
    x = np.asarray(counts, dtype=np.int64)
    return x + np.roll(x, 1) + np.roll(x, -1)


def neighborhood_count(config: Config, i: int) -> int:
    """Particles at site ``i`` and its two cycle neighbours."""
    i = check_site(i, config.n_sites)
    return config[i - 1] + config[i] + config[i + 1]


def log_rates(params: Params, config: Config) -> np.ndarray:
    """Natural log of every site's growth rate, ``lambda_i * u_i``."""
    config = _as_config(config, params.n_sites)
    return params.lambdas * neighborhood_counts(config.counts)


def transition_probabilities(params: Params, config: Config) -> np.ndarray:
    """Probability that the next particle lands at each site."""
    ell = log_rates(params, config)
    w = np.exp(ell - ell.max())
    return w / w.sum()


@njit(cache=True, nogil=True)
def _choose(logr, u):
    n = logr.shape[0]
    m = logr[0]
    for i in range(1, n):
        if logr[i] > m:
            m = logr[i]
    w = np.empty(n)
    total = 0.0
    for i in range(n):
        w[i] = np.exp(logr[i] - m)
        total += w[i]
    acc = 0.0
    last = 0
    for i in range(n):
        if w[i] > 0.0:
            last = i
        acc += w[i]
        if u < acc / total:
            return i
    return last


@njit(cache=True, nogil=True)
def _advance(lam, counts, nbhd, logr, uniforms, watch, window, single_ok, pair_ok,
             streaks, history, hist_pos, cap):
    # streaks = [last site, single-site run, run inside pair (j, j+1) for each j]
    n = lam.shape[0]
    n_draws = uniforms.shape[0]
    use_watch = watch.shape[0] > 0
    record = history.shape[0] > 0
    for t in range(n_draws):
        s = _choose(logr, uniforms[t])
        if counts[s] + 1 >= cap:
            return t, 3, s
        counts[s] += 1
        for d in range(-1, 2):
            j = (s + d) % n
            nbhd[j] += 1
            logr[j] = lam[j] * nbhd[j]
        if record:
            history[hist_pos + t] = s
        if streaks[0] == s:
            streaks[1] += 1
        else:
            streaks[0] = s
            streaks[1] = 1
        detected = window > 0 and single_ok[s] and streaks[1] >= window
        for j in range(n):
            if s == j or s == (j + 1) % n:
                streaks[2 + j] += 1
                if window > 0 and pair_ok[j] and streaks[2 + j] >= window:
                    detected = True
            else:
                streaks[2 + j] = 0
        if use_watch and not watch[s]:
            return t + 1, 2, s
        if detected:
            return t + 1, 1, s
    return n_draws, 0, -1


def _choose_site(logr: np.ndarray, u: float) -> int:
    return int(_choose(np.ascontiguousarray(logr, dtype=np.float64), float(u)))


def step(params: Params, config: Config, rng: RngStream) -> tuple[Config, int]:
    """Place one particle; returns the new configuration and the chosen site.

    The site is picked by inverse CDF on a single uniform draw.
    """
    config = _as_config(config, params.n_sites)
    site = _choose_site(log_rates(params, config), rng.uniform())
    if config.counts[site] + 1 >= COUNT_CAP:
        raise SaturationError(f"site {site + 1} reached the saturation cap")
    return config.add(site + 1), site + 1


class StopReason(str, enum.Enum):
    COMPLETED = "completed"
    DETECTED = "detected"
    EXITED = "exited"
    OBSERVER = "observer"
    OVERFLOW = "overflow"


@dataclass(frozen=True, eq=False)
class TrajectorySummary:
    initial: Config
    final: Config
    steps_executed: int
    stop_reason: StopReason
    last_site: int | None
    single_streak: int
    pair_streaks: tuple[int, ...]
    exit_site: int | None = None
    history: np.ndarray | None = None
    observer_index: int | None = None

    @property
    def allocations(self) -> np.ndarray:
        return self.final.counts - self.initial.counts

    def same_as(self, other: "TrajectorySummary") -> bool:
        """Field-by-field equality including the recorded history."""
        if self.history is None or other.history is None:
            same_hist = self.history is None and other.history is None
        else:
            same_hist = np.array_equal(self.history, other.history)
        return (
            self.initial == other.initial
            and self.final == other.final
            and self.steps_executed == other.steps_executed
            and self.stop_reason == other.stop_reason
            and self.last_site == other.last_site
            and self.single_streak == other.single_streak
            and self.pair_streaks == other.pair_streaks
            and self.exit_site == other.exit_site
            and same_hist
        )


def detection_masks(params: Params) -> tuple[np.ndarray, np.ndarray]:
    """Sites where single-site streaks count as localisation, and equal pairs.

    The first mask flags strict local maxima of ``lambda``; the second flags
    every ``j`` with ``lambda_j == lambda_{j+1}`` (exact equality).
    """
    lam = params.lambdas
    single_ok = (lam > np.roll(lam, 1)) & (lam > np.roll(lam, -1))
    pair_ok = lam == np.roll(lam, -1)
    return single_ok, pair_ok


Observer = Callable[[np.ndarray, np.ndarray], bool]


def simulate(
    params: Params,
    x0: Config | Sequence[int] | None,
    n_steps: int,
    rng: RngStream,
    observers: Sequence[Observer] = (),
    *,
    watch: Sequence[int] | None = None,
    detect_window: int = 0,
    record_history: bool = False,
) -> TrajectorySummary:
    """Run the chain for up to ``n_steps`` allocations.

    Stops early when

    * ``watch`` is given and a particle lands outside those sites,
    * ``detect_window > 0`` and the last ``detect_window`` allocations all
      went to one local maximum or to one equal-``lambda`` pair,
    * an observer returns True.  Observers are called after every block of
      allocations with the block's (1-based) sites and the current counts,
      so an observer stop happens on a block boundary.

    Saturation is reported through ``stop_reason`` rather than raised.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if detect_window < 0:
        raise ValueError("detect_window must be non-negative")
    x0 = _as_config(x0, params.n_sites)
    n = params.n_sites
    lam = np.ascontiguousarray(params.lambdas)
    counts = x0.counts.copy()
    nbhd = neighborhood_counts(counts)
    logr = lam * nbhd
    if watch is None:
        watch_mask = np.zeros(0, dtype=np.bool_)
    else:
        watch_mask = np.zeros(n, dtype=np.bool_)
        for s in watch:
            watch_mask[check_site(s, n) - 1] = True
    single_ok, pair_ok = detection_masks(params)
    streaks = np.zeros(n + 2, dtype=np.int64)
    streaks[0] = -1
    keep_history = record_history or bool(observers)
    history = np.zeros(n_steps if record_history else 0, dtype=np.int64)

    done = 0
    reason = _EXHAUSTED
    exit_site = None
    observer_index = None
    while done < n_steps:
        m = min(BLOCK_SIZE, n_steps - done)
        uniforms = rng.uniforms(m)
        if keep_history and not record_history:
            block_hist = np.zeros(m, dtype=np.int64)
            hist, pos = block_hist, 0
        else:
            hist, pos = history, done
        t, reason, s = _advance(
            lam, counts, nbhd, logr, uniforms, watch_mask, detect_window,
            single_ok, pair_ok, streaks, hist, pos, COUNT_CAP,
        )
        start = done
        done += t
        if reason == _EXITED:
            exit_site = int(s) + 1
        if reason != _EXHAUSTED:
            break
        if observers:
            block = (history[start:done] if record_history else hist[:t]) + 1
            for idx, obs in enumerate(observers):
                if obs(block, counts.copy()):
                    observer_index = idx
                    break
            if observer_index is not None:
                break

    if observer_index is not None:
        stop = StopReason.OBSERVER
    else:
        stop = {
            _EXHAUSTED: StopReason.COMPLETED,
            _DETECTED: StopReason.DETECTED,
            _EXITED: StopReason.EXITED,
            _OVERFLOW: StopReason.OVERFLOW,
        }[reason]
    return TrajectorySummary(
        initial=x0,
        final=Config(counts),
        steps_executed=done,
        stop_reason=stop,
        last_site=int(streaks[0]) + 1 if streaks[0] >= 0 else None,
        single_streak=int(streaks[1]),
        pair_streaks=tuple(int(v) for v in streaks[2:]),
        exit_site=exit_site,
        history=(history[:done] + 1) if record_history else None,
        observer_index=observer_index,
    )
