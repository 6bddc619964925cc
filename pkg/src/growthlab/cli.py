"""``growthlab`` command line: simulate, classify, oracle, progressions, verify."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._validation import COUNT_CAP, MIN_SITES
from .experiments import DEFAULT_CERT_THRESHOLD, DEFAULT_MAX_STEPS, DEFAULT_WINDOW, run_batch
from .landscape import classify, regime
from .model import Config, Params, RngStream, log_rates
from .oracles import (
    escape_bound,
    pair_rates,
    pair_stick_lower_factor_mc,
    pair_stick_probability_mc,
    pair_stick_upper_bound_mc,
    relocation_stopping_time,
    single_site_stick_probability,
)
from .progressions import (
    ZetaSpec,
    binomial_envelope_check,
    distributions_match,
    dominance_check,
    enumerate_Fn_vs_Zn,
    expected_log,
    partial_sum_paths,
    sample_Z_until_stopping,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 2, 3, 4
COMMANDS = ("simulate", "classify", "oracle", "progressions", "verify")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    n_sites: int
    lambdas: tuple[float, ...]
    x0: tuple[int, ...]
    steps: int = DEFAULT_MAX_STEPS
    runs: int = 100
    seed: int = 0
    window: int = DEFAULT_WINDOW
    cert_threshold: float = DEFAULT_CERT_THRESHOLD
    tail_epsilon: float = 1e-9
    max_terms: int = 1_000_000
    stop_on_detect: bool = True
    site: int | None = None
    horizon: int = 50
    samples: int = 10_000
    gamma: float = 0.5

    @property
    def params(self) -> Params:
        return Params(self.lambdas)

    @property
    def config(self) -> Config:
        return Config(self.x0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"], d["x0"] = list(self.lambdas), list(self.x0)
        return d


_FIELDS = {f.name for f in fields(RunConfig)}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _int_field(data: dict, name: str, lo: int, hi: int | None = None) -> None:
    if name not in data:
        return
    v = data[name]
    if not _is_int(v) or v < lo or (hi is not None and v > hi):
        bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        raise ConfigError(f"{name} must be an integer {bound}, got {v!r}")


def _open_unit(data: dict, name: str) -> None:
    if name in data and not (_is_real(data[name]) and 0.0 < data[name] < 1.0):
        raise ConfigError(f"{name} must lie in (0, 1), got {data[name]!r}")


def _reject_constant(token: str):
    raise ConfigError(f"non-finite number {token} is not allowed")


def parse_config(text: str) -> RunConfig:
    """Validate a JSON run configuration and apply defaults."""
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
    if "lambdas" not in data:
        raise ConfigError("lambdas is required")
    lambdas = data["lambdas"]
    if not isinstance(lambdas, list):
        raise ConfigError("lambdas must be a list of positive numbers")

    n = data.get("n_sites", len(lambdas))
    if not _is_int(n):
        raise ConfigError(f"n_sites must be an integer, got {n!r}")
    if n < MIN_SITES:
        raise ConfigError(f"n_sites must be ≥ {MIN_SITES}")
    if len(lambdas) != n:
        raise ConfigError(f"lambdas has {len(lambdas)} entries but n_sites is {n}")
    for i, v in enumerate(lambdas, start=1):
        if not (_is_real(v) and v > 0):
            raise ConfigError(f"lambdas[{i}] must be a positive number, got {v!r}")

    x0 = data.get("x0", [0] * n)
    if not isinstance(x0, list) or len(x0) != n:
        raise ConfigError(f"x0 must be a list of {n} non-negative integers")
    for i, v in enumerate(x0, start=1):
        if not _is_int(v) or not 0 <= v < COUNT_CAP:
            raise ConfigError(f"x0[{i}] must be a non-negative integer below 2^40, got {v!r}")

    _int_field(data, "steps", 1)
    _int_field(data, "runs", 1)
    _int_field(data, "seed", 0, 2**64 - 1)
    _int_field(data, "window", 1)
    _int_field(data, "max_terms", 1)
    _int_field(data, "horizon", 1)
    _int_field(data, "samples", 2)
    if data.get("site") is not None:
        _int_field(data, "site", 1, n)
    _open_unit(data, "cert_threshold")
    _open_unit(data, "tail_epsilon")
    _open_unit(data, "gamma")
    if "stop_on_detect" in data and not isinstance(data["stop_on_detect"], bool):
        raise ConfigError("stop_on_detect must be true or false")

    rest = {k: v for k, v in data.items() if k not in ("n_sites", "lambdas", "x0")}
    for key in ("cert_threshold", "tail_epsilon", "gamma"):
        if key in rest:
            rest[key] = float(rest[key])
    return RunConfig(n_sites=n, lambdas=tuple(float(v) for v in lambdas), x0=tuple(x0), **rest)


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8", newline="")


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n"


def cmd_simulate(cfg: RunConfig) -> tuple[dict, dict[str, str]]:
    report = run_batch(cfg.params, cfg.config, cfg.runs, cfg.steps, cfg.seed, cfg.window,
                       cfg.cert_threshold, cfg.stop_on_detect)
    doc = report.to_dict()
    return doc, {"simulate.json": _dump(doc), "runs.csv": report.to_csv()}


def _pairs_with_max(params: Params, config: Config) -> list[int]:
    ell = log_rates(params, config)
    n = params.n_sites
    return [k for k in classify(params).equal_pairs
            if max(ell[k - 1], ell[k % n]) >= ell.max()]


def cmd_classify(cfg: RunConfig) -> tuple[dict, dict[str, str]]:
    params, config = cfg.params, cfg.config
    doc = classify(params).to_dict()
    doc["x0"] = list(cfg.x0)
    doc["regimes"] = [regime(params, config, k).to_dict() for k in _pairs_with_max(params, config)]
    return doc, {"classify.json": _dump(doc)}


def _single_site_entry(params: Params, config: Config, k: int, cfg: RunConfig) -> dict:
    try:
        prob = single_site_stick_probability(params, config, k)
        bound = escape_bound(params, config, k)
    except ValueError as exc:
        return {"site": k, "skipped": str(exc)}
    return {"site": k, "stick_probability": prob, "escape_bound": bound,
            "certified": bool(bound < cfg.cert_threshold)}


def _pair_entry(params: Params, config: Config, k: int, cfg: RunConfig) -> dict:
    try:
        reg = regime(params, config, k)
        rates = pair_rates(params, config, k)
    except ValueError as exc:
        return {"pair": [k, k % params.n_sites + 1], "skipped": str(exc)}
    args = (params, config, k, cfg.horizon, cfg.samples, cfg.seed)
    entry = {
        "pair": [k, k % params.n_sites + 1],
        "regime": reg.to_dict(),
        "drift_left": rates.drift_left,
        "drift_right": rates.drift_right,
        "horizon": cfg.horizon,
        "samples": cfg.samples,
    }
    for key, fn in (("stick_probability", pair_stick_probability_mc),
                    ("upper_bound", pair_stick_upper_bound_mc),
                    ("lower_factor", pair_stick_lower_factor_mc)):
        mean, se = fn(*args)
        entry[key] = {"estimate": mean, "se": se}
    if rates.drift_left > 0 or rates.drift_right > 0:
        t = relocation_stopping_time(params, config, k, RngStream(cfg.seed, 0), cfg.max_terms)
        entry["relocation_time"] = {"left": t.left, "right": t.right, "first": t.first, "side": t.side}
    return entry


def cmd_oracle(cfg: RunConfig) -> tuple[dict, dict[str, str]]:
    params, config = cfg.params, cfg.config
    land = classify(params)
    if cfg.site is not None:
        singles = [cfg.site] if cfg.site in land.local_maxima else []
        pairs = [cfg.site] if cfg.site in land.equal_pairs else []
        if not singles and not pairs:
            raise ConfigError(f"site {cfg.site} is neither a local maximum nor the start of an equal pair")
    else:
        singles, pairs = land.local_maxima, list(land.equal_pairs)
    doc = {
        "lambdas": list(cfg.lambdas),
        "x0": list(cfg.x0),
        "single_site": [_single_site_entry(params, config, k, cfg) for k in singles],
        "pairs": [_pair_entry(params, config, k, cfg) for k in pairs],
    }
    return doc, {"oracle.json": _dump(doc)}


def _progression_family(params: Params) -> list[ZetaSpec]:
    """Side sequences for every equal pair whose outer neighbour exceeds it."""
    lam, n = params.lambdas, params.n_sites
    specs = []
    for k in classify(params).equal_pairs:
        inner, left, right = float(lam[k - 1]), float(lam[k - 2]), float(lam[(k + 1) % n])
        if right > inner:
            specs.append(ZetaSpec("right", 0.5, right, inner))
        if left > inner:
            specs.append(ZetaSpec("left", 0.5, left, inner))
    return specs or [ZetaSpec("right", 0.5, 2.0, 1.0)]


def _progression_checks(spec: ZetaSpec, cfg: RunConfig) -> dict:
    # drift changes sign at p_star; probe two p on each side of it
    if spec.kind == "right":
        p_star = spec.lam / spec.lambda_outer
        conv = (p_star / 3, 2 * p_star / 3)
        div = (p_star + (1 - p_star) / 3, p_star + 2 * (1 - p_star) / 3)
    else:
        p_star = 1.0 - spec.lam / spec.lambda_outer
        conv = (p_star + 2 * (1 - p_star) / 3, p_star + (1 - p_star) / 3)
        div = (2 * p_star / 3, p_star / 3)
    checks: dict = {"spec": {"kind": spec.kind, "lambda_outer": spec.lambda_outer, "lambda": spec.lam},
                    "drift_zero_at_p": p_star}

    enum_ok = all(distributions_match(*enumerate_Fn_vs_Zn(spec.with_p(conv[0]), m)) for m in range(1, 11))
    checks["normalised_vs_reciprocal_law"] = {"n_max": 10, "passed": enum_ok}

    doms = []
    for a, b in (conv, div):
        rep = dominance_check(spec.with_p(a), spec.with_p(b), cfg.samples, cfg.seed,
                              cfg.tail_epsilon, cfg.max_terms)
        doms.append({"p_a": a, "p_b": b, **rep.to_dict(), "passed": rep.holds})
    checks["dominance"] = doms

    grow = spec.with_p(div[1])
    violations = 0
    for i in range(cfg.samples):
        st = sample_Z_until_stopping(grow, cfg.gamma, RngStream(cfg.seed, i), cfg.max_terms)
        violations += cfg.gamma * st.partial_sum > st.ratio
    checks["stopped_progression"] = {"p": div[1], "gamma": cfg.gamma,
                                     "expected_log": expected_log(grow),
                                     "violations": violations, "passed": violations == 0}

    lo, hi = sorted(conv)
    za = partial_sum_paths(spec.with_p(lo), cfg.horizon, cfg.samples, cfg.seed)
    zb = partial_sum_paths(spec.with_p(hi), cfg.horizon, cfg.samples, cfg.seed)
    crossings = int((za > zb).sum()) if spec.kind == "right" else int((za < zb).sum())
    checks["common_random_numbers"] = {"p_low": lo, "p_high": hi, "n": cfg.horizon,
                                       "crossings": crossings, "passed": crossings == 0}
    checks["passed"] = (enum_ok and all(d["passed"] for d in doms)
                        and violations == 0 and crossings == 0)
    return checks


def cmd_progressions(cfg: RunConfig) -> tuple[dict, dict[str, str]]:
    suites = [_progression_checks(s, cfg) for s in _progression_family(cfg.params)]
    envelope = binomial_envelope_check((0.1, 0.5, 0.9), kappa=0.5, epsilon=0.9, horizon=1000,
                                       samples=min(cfg.samples, 1000), seed=cfg.seed)
    doc = {"suites": suites, "envelope": envelope.to_dict(),
           "passed": all(s["passed"] for s in suites) and envelope.constant is not None}
    return doc, {"progressions.json": _dump(doc)}


def cmd_verify(cfg: RunConfig | None, criteria, echo) -> tuple[dict, dict[str, str], bool]:
    from .acceptance import run_all

    seed = cfg.seed if cfg is not None else 0
    results = run_all(seed=seed, only=criteria, echo=echo)
    passed = all(r.passed for r in results)
    doc = {"seed": seed, "passed": passed, "criteria": [r.to_dict() for r in results]}
    return doc, {"verify.json": _dump(doc)}, passed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growthlab", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help="directory for JSON/CSV outputs")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--criteria", type=lambda s: {int(v) for v in s.split(",")},
                        help="verify: comma-separated subset of criteria")
    parser.add_argument("--quiet", action="store_true", help="do not print the JSON result")
    return parser


def load_config(path: Path, overrides: dict) -> RunConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        merged = {**cfg.to_dict(), **overrides}
        merged = {k: v for k, v in merged.items() if not (k == "site" and v is None)}
        cfg = parse_config(json.dumps(merged))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "runs": args.runs, "steps": args.steps}
    try:
        if args.config is not None:
            cfg = load_config(args.config, overrides)
        elif args.command == "verify":
            cfg = None
        else:
            raise ConfigError(f"{args.command} needs --config")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    echo = None if args.quiet else (lambda line: print(line, file=sys.stderr))
    try:
        if args.command == "verify":
            doc, files, passed = cmd_verify(cfg, args.criteria, echo)
        else:
            handler = {"simulate": cmd_simulate, "classify": cmd_classify, "oracle": cmd_oracle,
                       "progressions": cmd_progressions}[args.command]
            doc, files = handler(cfg)
            passed = True
        for name, text in files.items():
            _write(args.out, name, text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        sys.stdout.write(_dump(doc))
    return EXIT_OK if passed else EXIT_ACCEPTANCE


if __name__ == "__main__":
    sys.exit(main())
