"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numbers
import math

import numpy as np

MIN_SITES = 4
COUNT_CAP = 2**40


def check_lambdas(lambdas, n_sites: int | None = None) -> np.ndarray:
    """Return ``lambdas`` as a read-only float64 vector after validation."""
    lam = np.array(lambdas, dtype=np.float64, copy=True)
    if lam.ndim != 1:
        raise ValueError(f"lambdas must be one-dimensional, got shape {lam.shape}")
    if n_sites is not None and lam.shape[0] != n_sites:
        raise ValueError(
            f"lambdas has length {lam.shape[0]} but n_sites is {n_sites}"
        )
    if lam.shape[0] < MIN_SITES:
        raise ValueError(f"n_sites must be >= {MIN_SITES}, got {lam.shape[0]}")
    for i, v in enumerate(lam):
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"lambdas[{i + 1}] must be positive and finite, got {v!r}")
    lam.setflags(write=False)
    return lam


def check_counts(counts, n_sites: int | None = None) -> np.ndarray:
    """Return ``counts`` as a read-only int64 vector of particle counts."""
    raw = np.asarray(counts)
    if raw.ndim != 1:
        raise ValueError(f"counts must be one-dimensional, got shape {raw.shape}")
    if raw.size and not np.issubdtype(raw.dtype, np.integer):
        if not np.all(np.equal(np.mod(raw, 1), 0)):
            raise ValueError("counts must be integers")
    x = raw.astype(np.int64, copy=True)
    if n_sites is not None and x.shape[0] != n_sites:
        raise ValueError(f"counts has length {x.shape[0]} but n_sites is {n_sites}")
    for i, v in enumerate(x):
        if v < 0:
            raise ValueError(f"counts[{i + 1}] must be non-negative, got {v}")
        if v >= COUNT_CAP:
            raise ValueError(f"counts[{i + 1}] exceeds the saturation cap 2**40")
    x.setflags(write=False)
    return x


def check_site(k, n_sites: int) -> int:
    """Validate a 1-based site label and return it as ``int``."""
    if isinstance(k, bool) or not isinstance(k, numbers.Integral):
        raise TypeError(f"site index must be an integer, got {type(k).__name__}")
    if not 1 <= k <= n_sites:
        raise IndexError(f"site index {k} out of range 1..{n_sites}")
    return int(k)


def check_probability(p, name: str = "p", *, open_interval: bool = True) -> float:
    p = float(p)
    if open_interval:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {p}")
    elif not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_positive(value, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return int(seed)
