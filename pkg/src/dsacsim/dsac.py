"""DSAC: stochastic replacement, approximate counting, time-weighted counting.

A miss on a full table replaces the minimum-count entry only with probability
1/(min+1); a replacement keeps the evicted count and adds the increment to it.
Every activation adds ``1 + alpha*log2(tRAS/tRASmin)``. Once the sum of counts
reaches ``rh_threshold/2 - trr_mpa_term`` a TRR flag is raised, and the next
refresh command mitigates the highest-count row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import (
    EMPTY,
    CountTable,
    RandomSource,
    Tracker,
    accept_replacement,
    first_empty,
    rng_reseed_window,
    table_max,
    table_min,
)
from .errors import ConfigError

# meta slots
SUM, FLAG, MINPOS, FILLED, ALPHA, TRASMIN, THRESH, INTEGER, STOCH, RESET_ALL = range(10)

TRR_RESET_MODES = ("aggressor", "table")


@dataclass(frozen=True)
class DsacConfig:
    capacity: int = 20
    alpha: float = 0.0
    blast_radius: int = 2
    trr_mpa_term: int = 256
    rh_threshold: int = 20000
    trr_reset: str = "aggressor"
    integer_counts: bool = False
    random_mode: str = "exact"

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if self.blast_radius < 1:
            raise ConfigError("blast_radius must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if not self.trr_mpa_term < self.rh_threshold / 2:
            raise ConfigError("trr_mpa_term must be below rh_threshold/2")
        if self.trr_reset not in TRR_RESET_MODES:
            raise ConfigError(f"trr_reset must be one of {TRR_RESET_MODES}")
        if self.random_mode not in ("exact", "lfsr20"):
            raise ConfigError("random_mode must be 'exact' or 'lfsr20'")

    @property
    def trr_threshold(self) -> float:
        return self.rh_threshold / 2 - self.trr_mpa_term


def time_weight(tras_ns: float, trasmin_ns: float, alpha: float) -> float:
    """Extra counter weight alpha*log2(tRAS/tRASmin) for a long activation."""
    if trasmin_ns <= 0:
        raise ValueError("tRASmin must be positive")
    if tras_ns < trasmin_ns:
        raise ValueError(f"tRAS {tras_ns} ns below tRASmin {trasmin_ns} ns")
    if alpha == 0:
        return 0.0
    return alpha * math.log2(tras_ns / trasmin_ns)


def replacement_probability(min_count: float) -> float:
    if min_count < 0:
        raise ValueError("min_count must be non-negative")
    return 1.0 / (min_count + 1.0)


@nb.njit(cache=True)
def _increment(meta, tras):
    inc = 1.0
    alpha = meta[ALPHA]
    if alpha > 0.0:
        if tras < meta[TRASMIN]:
            raise ValueError("tRAS below tRASmin")
        inc += alpha * np.log2(tras / meta[TRASMIN])
    if meta[INTEGER] != 0.0:
        inc = np.floor(inc)
    return inc


@nb.njit(cache=True, inline="always")
def _dsac_activate(st, row, tras, now):
    rows, counts, slot_of, meta, rng = st
    inc = _increment(meta, tras)
    s = slot_of[row]
    if s >= 0:
        counts[s] += inc
        meta[SUM] += inc
        if s == meta[MINPOS]:
            meta[MINPOS] = -1.0
    elif meta[FILLED] < rows.shape[0]:
        s = first_empty(rows)
        rows[s] = row
        slot_of[row] = s
        counts[s] += inc
        meta[SUM] += inc
        meta[FILLED] += 1.0
        meta[MINPOS] = -1.0
    else:
        mp = np.int64(meta[MINPOS])
        if mp < 0:
            mp = table_min(rows, counts)
            meta[MINPOS] = mp
        if meta[STOCH] == 0.0 or accept_replacement(rng, counts[mp]):
            slot_of[rows[mp]] = -1
            rows[mp] = row
            slot_of[row] = mp
            counts[mp] += inc
            meta[SUM] += inc
            meta[MINPOS] = -1.0
    if meta[SUM] >= meta[THRESH]:
        meta[FLAG] = 1.0
    return -1


@nb.njit(cache=True)
def _dsac_refresh(st, cmd, now):
    rows, counts, slot_of, meta, rng = st
    if meta[FLAG] == 0.0:
        return -1
    mx = table_max(rows, counts)
    if mx < 0 or counts[mx] <= 0.0:
        return -1
    agg = rows[mx]
    if meta[RESET_ALL] != 0.0:
        for i in range(rows.shape[0]):
            if rows[i] != EMPTY:
                slot_of[rows[i]] = -1
            rows[i] = EMPTY
            counts[i] = 0.0
        meta[FILLED] = 0.0
    else:
        counts[mx] = 0.0
    total = 0.0
    for i in range(rows.shape[0]):
        total += counts[i]
    meta[SUM] = total
    meta[FLAG] = 0.0
    meta[MINPOS] = -1.0
    return agg


@nb.njit(cache=True)
def _dsac_reset_window(st, window):
    rng_reseed_window(st[4], window)


class DSAC(Tracker):
    name = "dsac"
    stochastic = True

    def __init__(self, config: DsacConfig = DsacConfig(), seed: int = 0,
                 rows_per_bank: int = 65536, trasmin_ns: float = 42.0):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.counters = config.capacity
        self.trasmin_ns = float(trasmin_ns)
        self.rng = RandomSource(seed, config.random_mode)
        self.table = CountTable(config.capacity)
        self.slot_of = np.full(rows_per_bank, -1, dtype=np.int64)
        meta = np.zeros(10, dtype=np.float64)
        meta[MINPOS] = -1.0
        meta[ALPHA] = config.alpha
        meta[TRASMIN] = self.trasmin_ns
        meta[THRESH] = config.trr_threshold
        meta[INTEGER] = float(config.integer_counts)
        meta[STOCH] = float(self.stochastic)
        meta[RESET_ALL] = float(config.trr_reset == "table")
        self.meta = meta
        self.state = (self.table.rows, self.table.counts, self.slot_of, meta, self.rng.array)

    _activate = staticmethod(_dsac_activate)
    _refresh = staticmethod(_dsac_refresh)
    _reset_window = staticmethod(_dsac_reset_window)

    @property
    def weighted_sum(self) -> float:
        return float(self.meta[SUM])

    @property
    def trr_flag(self) -> bool:
        return bool(self.meta[FLAG])

    def trr_threshold_reached(self) -> bool:
        return trr_threshold_reached(self.weighted_sum, self.config)

    def load(self, entries) -> None:
        """Overwrite the table with ``[(row, count), ...]`` (tests, walkthroughs)."""
        self.table.rows[:] = EMPTY
        self.table.counts[:] = 0.0
        self.slot_of[:] = -1
        for i, (row, count) in enumerate(entries):
            self.table.rows[i] = row
            self.table.counts[i] = count
            self.slot_of[row] = i
        self.meta[FILLED] = len(entries)
        self.meta[SUM] = float(self.table.counts.sum())
        self.meta[MINPOS] = -1.0
        self.meta[FLAG] = float(self.meta[SUM] >= self.meta[THRESH])

    def describe(self) -> dict:
        d = super().describe()
        d.update(
            counters=self.config.capacity,
            alpha=self.config.alpha,
            trr_mpa_term=self.config.trr_mpa_term,
            trr_threshold=self.config.trr_threshold,
            trr_reset=self.config.trr_reset,
            random_mode=self.config.random_mode,
        )
        return d


class SpaceSaving(DSAC):
    """Space Saving: DSAC's table and TRR policy with unconditional replacement."""

    name = "space_saving"
    stochastic = False


def trr_threshold_reached(weighted_sum: float, config: DsacConfig) -> bool:
    return weighted_sum >= config.trr_threshold
