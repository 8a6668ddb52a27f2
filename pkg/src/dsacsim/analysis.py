"""Closed-form security calculators and their Monte Carlo cross-checks.

Notation: ``c`` counters, ``RH`` the Rowhammer threshold, ``N = RH/2``
offers an aggressor may be filtered before a double-sided flip, ``m`` the
bound on the table's minimum count and ``P(r) = 1/(m+1)`` the replacement
probability. Magnitudes that underflow are carried as natural logs.

Reliability: a geometric failure process with per-trial probability ``P(f)``
tends to an exponential lifetime, so ``R(t) = exp(-lambda*t)``. ``lambda``
is taken per second, the unit under which a 0.999 target at
``P(f) = 1.245e-9`` comes out at about nine days.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .timing import TABLE1, TimingConfig, mpa_per_refi, mpa_per_refw

SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class AnalysisParams:
    c: int = 20
    rh_threshold: int = 20000
    mpa_refi: int = 256
    lambda_per_second: Optional[float] = None
    mtbf_seconds: Optional[float] = None

    def __post_init__(self):
        if self.c < 1:
            raise ConfigError("c must be >= 1")
        if not self.rh_threshold / 2 > self.mpa_refi:
            raise ConfigError("rh_threshold/2 must exceed mpa_refi")
        if self.mpa_refi < 0:
            raise ConfigError("mpa_refi must be non-negative")
        if self.lambda_per_second is not None and not self.lambda_per_second > 0:
            raise ConfigError("lambda must be positive")

    @property
    def n_offers(self) -> float:
        return self.rh_threshold / 2


def error_bound_space_saving(n: int, c: int) -> int:
    """Bound on a Space Saving estimate's error after ``n`` events.

    The error never exceeds ``(n-1)//c``, so it is strictly below the returned
    ``n//c`` whenever ``c`` divides ``n`` and at most equal to it otherwise.
    """
    if c < 1:
        raise ValueError("c must be >= 1")
    return n // c


def min_count_upper_bound(p: AnalysisParams) -> float:
    return (p.rh_threshold / 2 - p.mpa_refi) / p.c


def replacement_probability_bound(p: AnalysisParams) -> float:
    return 1.0 / (min_count_upper_bound(p) + 1.0)


def log_p_consecutive_filter(p: AnalysisParams) -> float:
    """Natural log of the probability that one aggressor is filtered N times in a row."""
    return p.n_offers * math.log1p(-replacement_probability_bound(p))


def p_consecutive_filter(p: AnalysisParams) -> float:
    return math.exp(log_p_consecutive_filter(p))


def log10_p_consecutive_filter(p: AnalysisParams) -> float:
    return log_p_consecutive_filter(p) / math.log(10)


def _check_weights(weights) -> list[tuple[float, float]]:
    try:
        pairs = [(float(cx), float(o)) for cx, o in weights]
    except (TypeError, ValueError):
        raise ValueError("weights must be (count, proportion) pairs") from None
    if not pairs:
        raise ValueError("weights are empty")
    for cx, o in pairs:
        if cx < 0 or not 0 <= o <= 1 or not math.isfinite(cx):
            raise ValueError(f"bad weight pair ({cx}, {o})")
    total = sum(cx * o for cx, o in pairs)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"access proportions sum to {total}, not 1")
    return pairs


def log_p_filter_general(weights: Sequence[tuple], p: AnalysisParams) -> float:
    """Natural log of sum_k Cx_k * (1 - o_k*P(r))^N.

    ``weights`` lists ``(Cx_k, o_k)``: ``Cx_k`` rows each receiving a share
    ``o_k`` of the activations, with ``sum(Cx_k * o_k) == 1``.
    """
    pairs = _check_weights(weights)
    pr = replacement_probability_bound(p)
    terms = [math.log(cx) + p.n_offers * math.log1p(-o * pr) for cx, o in pairs if cx > 0]
    top = max(terms)
    return top + math.log(sum(math.exp(t - top) for t in terms))


def p_filter_general(weights: Sequence[tuple], p: AnalysisParams) -> float:
    return math.exp(log_p_filter_general(weights, p))


def reliability(t_seconds: float, lam: float) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if t_seconds < 0:
        raise ValueError("time must be non-negative")
    return math.exp(-lam * t_seconds)


def lifetime_for(target_r: float, lam: float) -> float:
    """Time (s) until reliability decays to ``target_r``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < target_r < 1:
        raise ValueError("target reliability must be in (0, 1)")
    return -math.log(target_r) / lam


# -- counter requirements of other trackers ----------------------------------------

def twice_bound(cfg: TimingConfig = TABLE1) -> float:
    """MPA_refi * (1 + sum_{n=1}^{cmds} (tREFWe/tREFIe) / (n*RH))."""
    cmds = cfg.refresh_cmds_per_window
    ratio = float(cfg.tREFWe_ns / cfg.tREFIe_ns)
    harmonic = math.fsum(1.0 / n for n in range(1, cmds + 1))
    return mpa_per_refi(cfg) * (1.0 + ratio * harmonic / cfg.rh_threshold)


def cat_two_per_level(cfg: TimingConfig = TABLE1, rh_threshold: Optional[int] = None) -> float:
    return mpa_per_refw(cfg) / (rh_threshold or cfg.rh_threshold)


def cat_two_coefficients(cfg: TimingConfig = TABLE1) -> dict:
    """Per-level counter coefficient under RH as configured and under RH = 20480."""
    return {
        "rh_configured": cfg.rh_threshold,
        "per_level": cat_two_per_level(cfg),
        "rh_binary": 20480,
        "per_level_binary": cat_two_per_level(cfg, 20480),
    }


def required_counters(algorithm: str, cfg: TimingConfig = TABLE1, levels: int = 1,
                      roots: int = 0, rh_threshold: Optional[int] = None) -> int:
    """Counters a baseline needs to be safe under ``cfg``."""
    rh = rh_threshold or cfg.rh_threshold
    if algorithm == "graphene":
        return math.ceil(mpa_per_refw(cfg) / (rh // 4 + 1) - 1)
    if algorithm == "cat_two":
        if levels < 1 or roots < 0:
            raise ValueError("levels must be >= 1 and roots >= 0")
        return math.ceil(mpa_per_refw(cfg) * levels / rh + roots)
    if algorithm == "twice":
        return math.ceil(twice_bound(cfg if rh == cfg.rh_threshold else cfg.replace(rh_threshold=rh)))
    raise ValueError(f"unknown algorithm {algorithm!r}; expected graphene, cat_two or twice")


def params_for(cfg: TimingConfig = TABLE1, c: int = 20, mpa_term: Optional[int] = None,
               lam: Optional[float] = None) -> AnalysisParams:
    """AnalysisParams from a timing config; the MPA term defaults to DSAC's 256."""
    return AnalysisParams(c=c, rh_threshold=cfg.rh_threshold,
                          mpa_refi=256 if mpa_term is None else mpa_term, lambda_per_second=lam)


# -- Monte Carlo oracles ------------------------------------------------------------

def mc_consecutive_filter(p: AnalysisParams, trials: int, seed: int = 0,
                          chunk: int = 20000) -> tuple[float, float]:
    """Fraction of trials in which N Bernoulli(P(r)) offers all fail, and its std error."""
    rng = np.random.default_rng(seed)
    pr = replacement_probability_bound(p)
    n = int(round(p.n_offers))
    failures = 0
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        accepted = rng.random((k, n)) < pr
        failures += int(np.count_nonzero(~accepted.any(axis=1)))
        done += k
    rate = failures / trials
    return rate, math.sqrt(max(rate * (1 - rate), 1e-300) / trials)


def mc_filter_general(weights: Sequence[tuple], p: AnalysisParams, trials: int, seed: int = 0,
                      chunk: int = 20000) -> tuple[float, float]:
    """Mean number of rows never admitted over N activations drawn by access share."""
    pairs = _check_weights(weights)
    shares = np.concatenate([np.full(int(cx), o) for cx, o in pairs])
    rows = len(shares)
    rng = np.random.default_rng(seed)
    pr = replacement_probability_bound(p)
    n = int(round(p.n_offers))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        who = rng.choice(rows, size=(k, n), p=shares / shares.sum())
        ok = rng.random((k, n)) < pr
        admitted = np.zeros((k, rows), dtype=bool)
        ti, _ = np.nonzero(ok)
        admitted[ti, who[ok]] = True
        missed = rows - admitted.sum(axis=1)
        total += float(missed.sum())
        total_sq += float((missed.astype(np.float64) ** 2).sum())
        done += k
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    return mean, math.sqrt(var / trials)


# -- uniform vs skewed double-sided patterns ------------------------------------------

DEFAULT_FAMILIES = ("uniform", "zipf:0.5", "zipf:1", "zipf:2")


def worst_pattern_experiment(cfg: TimingConfig = TABLE1, c: int = 20,
                             families: Sequence[str] = DEFAULT_FAMILIES,
                             seeds: Sequence[int] = tuple(range(10)), n_rows: int = 100,
                             windows: int = 1, window_reset: bool = True) -> dict:
    """Mean-of-max DSAC disturbance per weight family with 95% normal intervals."""
    from .engine import build_tracker, run_simulation
    from .patterns import PatternSpec

    if not families:
        raise ValueError("no weight families")
    budget = mpa_per_refi(cfg)
    out = {"counters": c, "n_rows": n_rows, "windows": windows, "seeds": list(seeds),
           "budget_per_interval": budget, "families": {}}
    for fam in families:
        maxima = []
        for seed in seeds:
            if budget == 0:
                maxima.append(0)
                continue
            spec = PatternSpec("weighted", n_rows=min(n_rows, budget), weights=fam, seed=seed)
            tracker = build_tracker("dsac", cfg, seed=seed, counters=c)
            rep = run_simulation(cfg, spec, tracker, windows=windows, seed=seed,
                                 window_reset=window_reset)
            maxima.append(rep.max_disturbance)
        arr = np.asarray(maxima, dtype=np.float64)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        half = 1.96 * sd / math.sqrt(len(arr)) if len(arr) else 0.0
        mean = float(arr.mean()) if len(arr) else 0.0
        out["families"][fam] = {"maxima": [int(x) for x in maxima], "mean": mean,
                                "ci95": [mean - half, mean + half]}
    ranked = sorted(out["families"], key=lambda f: -out["families"][f]["mean"])
    out["worst"] = ranked[0]
    out["ranking"] = ranked
    return out
