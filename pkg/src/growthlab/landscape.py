"""Classification of the ``lambda`` landscape and pair-regime quantities.

All comparisons of ``lambda`` values use exact floating-point equality:
two sites form a pair only when their parameters are the same double.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_site
from .model import Config, Params, _as_config, log_rates

__all__ = [
    "FeatureKind",
    "PairType",
    "SiteFeature",
    "LandscapeReport",
    "PairContext",
    "RegimeKind",
    "Regime",
    "classify",
    "z_values",
    "pair_type",
    "r_of",
    "p_of",
    "pair_context",
    "regime",
]

CRITICAL_ATOL = 1e-12


class FeatureKind(str, enum.Enum):
    LOCAL_MAXIMUM = "LocalMaximum"
    LOCAL_MINIMUM = "LocalMinimum"
    GROWTH_POINT = "GrowthPoint"
    LOCAL_MINIMUM_SIZE2 = "LocalMinimumSize2"
    LOCAL_MAXIMUM_SIZE2 = "LocalMaximumSize2"
    SADDLE_POINT = "SaddlePoint"
    PLATEAU = "Plateau"


class PairType(int, enum.Enum):
    TYPE1 = 1
    TYPE2 = 2


@dataclass(frozen=True)
class SiteFeature:
    kind: FeatureKind
    sites: tuple[int, ...]
    pair_type: PairType | None = None
    z1: float | None = None
    z2: float | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "sites": list(self.sites)}
        if self.pair_type is not None:
            out["type"] = int(self.pair_type)
        if len(self.sites) == 2:
            out["z1"] = self.z1
            out["z2"] = self.z2
        if self.kind is FeatureKind.PLATEAU:
            out["length"] = len(self.sites)
        return out


@dataclass(frozen=True)
class LandscapeReport:
    lambdas: tuple[float, ...]
    features: tuple[SiteFeature, ...]
    equal_pairs: tuple[int, ...] = field(default=())

    def of_kind(self, kind: FeatureKind) -> list[SiteFeature]:
        return [f for f in self.features if f.kind is kind]

    @property
    def local_maxima(self) -> list[int]:
        return [f.sites[0] for f in self.of_kind(FeatureKind.LOCAL_MAXIMUM)]

    @property
    def plateaus(self) -> list[SiteFeature]:
        return self.of_kind(FeatureKind.PLATEAU)

    def features_at(self, site: int) -> list[SiteFeature]:
        return [f for f in self.features if site in f.sites]

    def to_dict(self) -> dict:
        return {
            "n_sites": len(self.lambdas),
            "lambdas": list(self.lambdas),
            "features": [f.to_dict() for f in self.features],
            "equal_pairs": [[k, k % len(self.lambdas) + 1] for k in self.equal_pairs],
        }


def z_values(lambda_left: float, lam: float, lambda_right: float) -> tuple[float | None, float | None]:
    """Thresholds on ``r`` at which the side drifts change sign.

    ``z1`` exists only when the left outer parameter exceeds ``lam`` and
    ``z2`` only when the right one does; a missing threshold is ``None``.
    """
    lambda_left = check_positive(lambda_left, "lambda_left")
    lam = check_positive(lam, "lambda")
    lambda_right = check_positive(lambda_right, "lambda_right")
    z1 = math.log((lambda_left - lam) / lam) / lam if lambda_left > lam else None
    z2 = math.log(lam / (lambda_right - lam)) / lam if lambda_right > lam else None
    return z1, z2


def pair_type(lambda_left: float, lam: float, lambda_right: float) -> PairType:
    """Type of a size-2 local minimum; type 2 includes the boundary."""
    lambda_left = check_positive(lambda_left, "lambda_left")
    lam = check_positive(lam, "lambda")
    lambda_right = check_positive(lambda_right, "lambda_right")
    if not lam < min(lambda_left, lambda_right):
        raise ValueError("pair_type needs lambda < min(lambda_left, lambda_right)")
    threshold = lambda_left * lambda_right / (lambda_left + lambda_right)
    return PairType.TYPE1 if lam > threshold else PairType.TYPE2


def _equal_runs(lam: np.ndarray) -> list[tuple[int, int]]:
    """Maximal cyclic runs of equal parameters as (start index, length), 0-based."""
    n = lam.shape[0]
    if np.all(lam == lam[0]):
        return [(0, n)]
    # rotate so that a run boundary sits at index 0
    start = next(i for i in range(n) if lam[i] != lam[i - 1])
    runs = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and lam[(start + j + 1) % n] == lam[(start + i) % n]:
            j += 1
        runs.append(((start + i) % n, j - i + 1))
        i = j + 1
    return runs


def classify(params: Params) -> LandscapeReport:
    """Label every site of the cycle by comparing ``lambda`` with its neighbours."""
    lam = params.lambdas
    n = params.n_sites
    features: list[SiteFeature] = []
    for start, length in sorted(_equal_runs(lam)):
        sites = tuple((start + d) % n + 1 for d in range(length))
        if length == 1:
            a, b, c = lam[start - 1], lam[start], lam[(start + 1) % n]
            if b > max(a, c):
                kind = FeatureKind.LOCAL_MAXIMUM
            elif b < min(a, c):
                kind = FeatureKind.LOCAL_MINIMUM
            else:
                kind = FeatureKind.GROWTH_POINT
            features.append(SiteFeature(kind, sites))
        elif length == 2:
            left, mid, right = lam[start - 1], lam[start], lam[(start + 2) % n]
            z1, z2 = z_values(left, mid, right)
            if mid < min(left, right):
                features.append(SiteFeature(
                    FeatureKind.LOCAL_MINIMUM_SIZE2, sites,
                    pair_type=pair_type(left, mid, right), z1=z1, z2=z2,
                ))
            elif mid > max(left, right):
                features.append(SiteFeature(FeatureKind.LOCAL_MAXIMUM_SIZE2, sites, z1=z1, z2=z2))
            else:
                features.append(SiteFeature(FeatureKind.SADDLE_POINT, sites, z1=z1, z2=z2))
        else:
            features.append(SiteFeature(FeatureKind.PLATEAU, sites))
    equal_pairs = tuple(k + 1 for k in range(n) if lam[k] == lam[(k + 1) % n])
    return LandscapeReport(tuple(float(v) for v in lam), tuple(features), equal_pairs)


def r_of(config: Config, k: int) -> int:
    """``x_{k+2} - x_{k-1}`` for the pair starting at site ``k``."""
    k = check_site(k, config.n_sites)
    return config[k + 2] - config[k - 1]


def p_of(lam: float, r: float) -> float:
    """Conditional probability that a pair allocation goes to the right member.

    Logistic in ``lam * r``; evaluated in the form that cannot overflow.
    """
    lam = check_positive(lam, "lambda")
    t = lam * r
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class PairContext:
    k: int
    lambda_left: float
    lam: float
    lambda_right: float
    r: int
    z1: float | None
    z2: float | None
    p: float


def _check_pair(params: Params, k: int) -> tuple[int, float, float, float]:
    n = params.n_sites
    k = check_site(k, n)
    lam = params.lambdas
    i = k - 1
    if lam[i] != lam[(i + 1) % n]:
        raise ValueError(f"sites {k} and {k % n + 1} do not have equal lambda")
    return k, float(lam[i - 1]), float(lam[i]), float(lam[(i + 2) % n])


def pair_context(params: Params, config: Config, k: int) -> PairContext:
    config = _as_config(config, params.n_sites)
    k, left, mid, right = _check_pair(params, k)
    r = r_of(config, k)
    z1, z2 = z_values(left, mid, right)
    return PairContext(k, left, mid, right, r, z1, z2, p_of(mid, r))


class RegimeKind(str, enum.Enum):
    PAIR_STICKING_POSSIBLE = "PairStickingPossible"
    ZERO_STICKING = "ZeroSticking"
    CRITICAL = "Critical"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    condition: str
    context: PairContext

    def to_dict(self) -> dict:
        c = self.context
        return {
            "kind": self.kind.value,
            "condition": self.condition,
            "k": c.k,
            "r": c.r,
            "z1": c.z1,
            "z2": c.z2,
            "p": c.p,
        }


def _near(r: int, z: float | None) -> bool:
    return z is not None and abs(r - z) <= CRITICAL_ATOL


def regime(params: Params, config: Config, k: int) -> Regime:
    """Whether the pair ``{k, k+1}`` can still capture all future particles.

    Requires ``lambda_k == lambda_{k+1}`` and the maximal rate on the pair.
    The answer compares ``r`` with the thresholds ``z1``/``z2``; exact hits
    (within 1e-12) are returned as ``Critical`` for manual review.
    """
    config = _as_config(config, params.n_sites)
    ctx = pair_context(params, config, k)
    ell = log_rates(params, config)
    i = ctx.k - 1
    if max(ell[i], ell[(i + 1) % params.n_sites]) < ell.max():
        raise ValueError(f"the maximal rate is not attained on pair {{{ctx.k}, {ctx.k % params.n_sites + 1}}}")

    left, lam, right, r, z1, z2 = ctx.lambda_left, ctx.lam, ctx.lambda_right, ctx.r, ctx.z1, ctx.z2
    ok, zero, crit = RegimeKind.PAIR_STICKING_POSSIBLE, RegimeKind.ZERO_STICKING, RegimeKind.CRITICAL

    if left <= lam and right <= lam:
        return Regime(ok, "both outer neighbours at most lambda", ctx)
    if left <= lam < right:
        where = "saddle" if left < lam else "plateau edge"
        if _near(r, z2):
            return Regime(crit, f"{where}: r == z2", ctx)
        if r < z2:
            return Regime(ok, f"{where}: r < z2", ctx)
        return Regime(zero, f"{where}: r >= z2", ctx)
    if right <= lam < left:
        where = "saddle" if right < lam else "plateau edge"
        if _near(r, z1):
            return Regime(crit, f"{where}: r == z1", ctx)
        if r > z1:
            return Regime(ok, f"{where}: r > z1", ctx)
        return Regime(zero, f"{where}: r <= z1", ctx)
    # size-2 local minimum
    if _near(r, z1) or _near(r, z2):
        return Regime(crit, "size-2 minimum: r on a threshold", ctx)
    if z1 < r < z2:
        return Regime(ok, "size-2 minimum: z1 < r < z2", ctx)
    if z2 <= z1:
        return Regime(zero, "size-2 minimum of type 2: empty interval", ctx)
    return Regime(zero, "size-2 minimum: r outside (z1, z2)", ctx)
