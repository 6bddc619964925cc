"""Simulation and analysis of a nearest-neighbour growth process on a cycle."""

from .estimator import LocalizationEstimator
from .experiments import (
    BatchReport,
    ExitKind,
    FirstExit,
    PairPersisted,
    Verdict,
    VerdictKind,
    certificate_soundness,
    chain_stick_frequency,
    detect_localization,
    first_exit,
    ratio_drift,
    run_batch,
    run_trajectory,
)
from .landscape import (
    FeatureKind,
    LandscapeReport,
    PairType,
    Regime,
    RegimeKind,
    SiteFeature,
    classify,
    p_of,
    pair_type,
    r_of,
    regime,
    z_values,
)
from .model import (
    Config,
    Params,
    RngStream,
    SaturationError,
    StopReason,
    TrajectorySummary,
    log_rates,
    neighborhood_count,
    simulate,
    step,
    transition_probabilities,
)
from .oracles import (
    escape_bound,
    pair_stick_lower_factor_mc,
    pair_stick_probability_mc,
    pair_stick_upper_bound_mc,
    relocation_stopping_time,
    single_site_stick_probability,
)
from .progressions import (
    ZetaSpec,
    binomial_envelope_check,
    dominance_check,
    enumerate_Fn_vs_Zn,
    sample_Z,
    sample_Z_until_stopping,
)

__version__ = "0.1.0"

__all__ = [
    "BatchReport",
    "Config",
    "ExitKind",
    "FeatureKind",
    "FirstExit",
    "LandscapeReport",
    "LocalizationEstimator",
    "PairPersisted",
    "PairType",
    "Params",
    "Regime",
    "RegimeKind",
    "RngStream",
    "SaturationError",
    "SiteFeature",
    "StopReason",
    "TrajectorySummary",
    "Verdict",
    "VerdictKind",
    "ZetaSpec",
    "binomial_envelope_check",
    "certificate_soundness",
    "chain_stick_frequency",
    "classify",
    "detect_localization",
    "dominance_check",
    "enumerate_Fn_vs_Zn",
    "escape_bound",
    "first_exit",
    "log_rates",
    "neighborhood_count",
    "p_of",
    "pair_stick_lower_factor_mc",
    "pair_stick_probability_mc",
    "pair_stick_upper_bound_mc",
    "pair_type",
    "r_of",
    "ratio_drift",
    "regime",
    "relocation_stopping_time",
    "run_batch",
    "run_trajectory",
    "sample_Z",
    "sample_Z_until_stopping",
    "simulate",
    "single_site_stick_probability",
    "step",
    "transition_probabilities",
    "z_values",
]
