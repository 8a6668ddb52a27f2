"""Comparison trackers sharing the ``Tracker`` contract.

Graphene, TWiCe, PARA, PRoHIT and MRLoc follow their published descriptions
only as far as needed for disturbance comparisons. ``NoMitigation`` and
``ExactOracle`` are reference points for the simulator itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from .core import (
    EMPTY,
    CountTable,
    RandomSource,
    Tracker,
    first_empty,
    rng_reseed_window,
    rng_uniform,
    table_max,
    table_min,
)
from .errors import ConfigError


@dataclass(frozen=True)
class BaselineConfig:
    algorithm: str = "graphene"
    capacity: int = 20
    blast_radius: int = 2
    para_probability: float = 0.001
    prohit_cold_size: int = 16
    prohit_hot_size: int = 4
    prohit_promote_probability: float = 0.5
    mrloc_queue_length: int = 512
    mrloc_probability_scale: float = 0.002
    graphene_trr_threshold: Optional[int] = None  # default rh_threshold // 4
    twice_trr_threshold: Optional[int] = None  # default rh_threshold // 4

    def __post_init__(self):
        for name in ("para_probability", "prohit_promote_probability"):
            p = getattr(self, name)
            if not 0 < p <= 1:
                raise ConfigError(f"{name} must be in (0, 1]")
        if self.mrloc_probability_scale <= 0:
            raise ConfigError("mrloc_probability_scale must be positive")
        for name in ("capacity", "blast_radius", "prohit_cold_size", "prohit_hot_size",
                     "mrloc_queue_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("graphene_trr_threshold", "twice_trr_threshold"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")


# -- Graphene (Misra-Gries with a spillover counter) --------------------------

G_SPILL, G_THRESH, G_HEAD, G_TAIL, G_FILLED = range(5)
QUEUE_LEN = 1024


@nb.njit(cache=True, inline="always")
def _graphene_activate(st, row, tras, now):
    rows, counts, slot_of, meta, queue = st
    s = slot_of[row]
    if s < 0:
        spill = meta[G_SPILL]
        for i in range(rows.shape[0]):
            if counts[i] == spill:
                s = i
                break
        if s < 0:
            meta[G_SPILL] = spill + 1
            return -1
        if rows[s] != EMPTY:
            slot_of[rows[s]] = -1
        else:
            meta[G_FILLED] += 1
        rows[s] = row
        slot_of[row] = s
    counts[s] += 1
    if counts[s] % meta[G_THRESH] == 0 and meta[G_TAIL] - meta[G_HEAD] < QUEUE_LEN:
        queue[meta[G_TAIL] % QUEUE_LEN] = row
        meta[G_TAIL] += 1
    return -1


@nb.njit(cache=True)
def _graphene_refresh(st, cmd, now):
    meta = st[3]
    queue = st[4]
    if meta[G_HEAD] == meta[G_TAIL]:
        return -1
    agg = queue[meta[G_HEAD] % QUEUE_LEN]
    meta[G_HEAD] += 1
    return agg


@nb.njit(cache=True)
def _graphene_reset_window(st, window):
    rows, counts, slot_of, meta, queue = st
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY:
            slot_of[rows[i]] = -1
        rows[i] = EMPTY
        counts[i] = 0
    meta[G_SPILL] = 0
    meta[G_HEAD] = 0
    meta[G_TAIL] = 0
    meta[G_FILLED] = 0


class Graphene(Tracker):
    """Misra-Gries table plus spillover counter, reset every window.

    A row is queued for TRR each time its estimated count reaches a multiple
    of the TRR threshold; one queued row is mitigated per refresh command.
    Estimates are never lowered mid-window, which keeps the Misra-Gries
    accounting identity ``sum(counts) + c*spillover >= activations`` exact.
    """

    name = "graphene"

    def __init__(self, config: BaselineConfig = BaselineConfig(), rh_threshold: int = 20000,
                 rows_per_bank: int = 65536, seed: int = 0):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.counters = config.capacity
        self.trr_threshold = config.graphene_trr_threshold or rh_threshold // 4
        self.rows = np.full(config.capacity, EMPTY, dtype=np.int64)
        self.counts = np.zeros(config.capacity, dtype=np.int64)
        self.slot_of = np.full(rows_per_bank, -1, dtype=np.int64)
        self.meta = np.zeros(5, dtype=np.int64)
        self.meta[G_THRESH] = self.trr_threshold
        self.queue = np.zeros(QUEUE_LEN, dtype=np.int64)
        self.state = (self.rows, self.counts, self.slot_of, self.meta, self.queue)

    _activate = staticmethod(_graphene_activate)
    _refresh = staticmethod(_graphene_refresh)
    _reset_window = staticmethod(_graphene_reset_window)

    @property
    def spillover(self) -> int:
        return int(self.meta[G_SPILL])

    @property
    def table(self) -> CountTable:
        return CountTable(len(self.rows), self.rows, self.counts)

    def pending(self) -> list[int]:
        h, t = int(self.meta[G_HEAD]), int(self.meta[G_TAIL])
        return [int(self.queue[i % QUEUE_LEN]) for i in range(h, t)]

    def describe(self):
        d = super().describe()
        d.update(counters=self.counters, trr_threshold=self.trr_threshold)
        return d


# -- TWiCe --------------------------------------------------------------------

T_THRESH, T_PRUNE, T_FILLED = range(3)


@nb.njit(cache=True)
def _twice_remove(rows, counts, life, slot_of, meta, i):
    slot_of[rows[i]] = -1
    rows[i] = EMPTY
    counts[i] = 0
    life[i] = 0
    meta[T_FILLED] -= 1


@nb.njit(cache=True, inline="always")
def _twice_activate(st, row, tras, now):
    rows, counts, life, slot_of, meta = st
    s = slot_of[row]
    if s >= 0:
        counts[s] += 1
        return -1
    if meta[T_FILLED] < rows.shape[0]:
        s = first_empty(rows)
        meta[T_FILLED] += 1
    else:
        s = table_min(rows, counts)
        slot_of[rows[s]] = -1
    rows[s] = row
    slot_of[row] = s
    counts[s] = 1
    life[s] = 0
    return -1


@nb.njit(cache=True)
def _twice_refresh(st, cmd, now):
    rows, counts, life, slot_of, meta = st
    agg = -1
    best = -1
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY and counts[i] >= meta[T_THRESH] and counts[i] >= best:
            best = counts[i]
            agg = i
    out = -1
    if agg >= 0:
        out = rows[agg]
        _twice_remove(rows, counts, life, slot_of, meta, agg)
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY:
            life[i] += 1
            if counts[i] < life[i] * meta[T_PRUNE]:
                _twice_remove(rows, counts, life, slot_of, meta, i)
    return out


@nb.njit(cache=True)
def _twice_reset_window(st, window):
    rows, counts, life, slot_of, meta = st
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY:
            _twice_remove(rows, counts, life, slot_of, meta, i)


class TWiCe(Tracker):
    """Table of (row, count, life); newcomers start at 1, no approximate counting.

    At every refresh the largest entry at or above the TRR threshold is
    mitigated and removed. An entry whose count is below
    ``life * threshold / refresh_cmds_per_window`` can no longer reach the
    threshold at the minimum rate and is pruned.
    """

    name = "twice"

    def __init__(self, config: BaselineConfig = BaselineConfig(), rh_threshold: int = 20000,
                 refresh_cmds_per_window: int = 8192, rows_per_bank: int = 65536, seed: int = 0):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.counters = config.capacity
        self.trr_threshold = config.twice_trr_threshold or rh_threshold // 4
        self.prune_rate = self.trr_threshold / refresh_cmds_per_window
        self.rows = np.full(config.capacity, EMPTY, dtype=np.int64)
        self.counts = np.zeros(config.capacity, dtype=np.float64)
        self.life = np.zeros(config.capacity, dtype=np.float64)
        self.slot_of = np.full(rows_per_bank, -1, dtype=np.int64)
        self.meta = np.array([self.trr_threshold, self.prune_rate, 0.0])
        self.state = (self.rows, self.counts, self.life, self.slot_of, self.meta)

    _activate = staticmethod(_twice_activate)
    _refresh = staticmethod(_twice_refresh)
    _reset_window = staticmethod(_twice_reset_window)

    @property
    def table(self) -> CountTable:
        return CountTable(len(self.rows), self.rows, self.counts)

    def describe(self):
        d = super().describe()
        d.update(counters=self.counters, trr_threshold=self.trr_threshold,
                 prune_rate=self.prune_rate)
        return d


# -- PARA ---------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _para_activate(st, row, tras, now):
    p, rng = st
    if rng_uniform(rng) < p[0]:
        return row
    return -1


@nb.njit(cache=True)
def _noop_refresh(st, cmd, now):
    return -1


@nb.njit(cache=True)
def _rng_reset_window(st, window):
    rng_reseed_window(st[-1], window)


class PARA(Tracker):
    """Refresh an activated row's neighbours with a fixed small probability."""

    name = "para"

    def __init__(self, config: BaselineConfig = BaselineConfig(), seed: int = 0,
                 rows_per_bank: int = 65536):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.probability = config.para_probability
        self.rng = RandomSource(seed)
        self.state = (np.array([self.probability]), self.rng.array)

    _activate = staticmethod(_para_activate)
    _refresh = staticmethod(_noop_refresh)
    _reset_window = staticmethod(_rng_reset_window)


# -- PRoHIT -------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _prohit_activate(st, row, tras, now):
    cold, hot, p, rng = st
    h = -1
    for i in range(hot.shape[0]):
        if hot[i] == row:
            h = i
            break
    if h >= 0:
        if h > 0 and rng_uniform(rng) < p[0]:
            hot[h] = hot[h - 1]
            hot[h - 1] = row
        return -1
    k = -1
    for i in range(cold.shape[0]):
        if cold[i] == row:
            k = i
            break
    if k >= 0:
        if rng_uniform(rng) < p[0]:
            bottom = hot.shape[0] - 1
            cold[k] = hot[bottom]
            hot[bottom] = row
        return -1
    k = first_empty(cold)
    if k < 0:
        k = min(np.int64(rng_uniform(rng) * cold.shape[0]), cold.shape[0] - 1)
    cold[k] = row
    return -1


@nb.njit(cache=True)
def _prohit_refresh(st, cmd, now):
    hot = st[1]
    for i in range(hot.shape[0]):
        if hot[i] != EMPTY:
            agg = hot[i]
            hot[i] = EMPTY
            return agg
    return -1


class PRoHIT(Tracker):
    """Cold/hot priority tables without counters.

    A miss lands in the cold table (evicting a uniformly random cold entry
    when full). A cold hit is promoted, with the promote probability, into
    the bottom hot slot; a hot hit moves up one slot with the same
    probability. Each refresh mitigates and removes the topmost hot entry.
    """

    name = "prohit"

    def __init__(self, config: BaselineConfig = BaselineConfig(), seed: int = 0,
                 rows_per_bank: int = 65536):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.cold = np.full(config.prohit_cold_size, EMPTY, dtype=np.int64)
        self.hot = np.full(config.prohit_hot_size, EMPTY, dtype=np.int64)
        self.rng = RandomSource(seed)
        self.state = (self.cold, self.hot, np.array([config.prohit_promote_probability]),
                      self.rng.array)

    _activate = staticmethod(_prohit_activate)
    _refresh = staticmethod(_prohit_refresh)
    _reset_window = staticmethod(_rng_reset_window)


# -- MRLoc --------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _mrloc_activate(st, row, tras, now):
    last_seen, meta, rng = st
    qlen = meta[0]
    clock = meta[2]
    prev = last_seen[row]
    last_seen[row] = clock
    meta[2] = clock + 1
    if prev < 0:
        return -1
    distance = clock - prev - 1
    if distance >= qlen:
        return -1
    if rng_uniform(rng) < mrloc_probability(distance, qlen, meta[1]):
        return row
    return -1


@nb.njit(cache=True)
def mrloc_probability(distance, queue_length, scale):
    """Linear recency map: scale at distance 0, falling to 0 at the queue length."""
    return min(1.0, scale * (1.0 - distance / queue_length))


class MRLoc(Tracker):
    """FIFO of recently activated rows' victims; recency raises TRR probability.

    The queue holds the last ``queue_length`` activations. A row found in it
    after ``d`` intervening activations triggers a TRR with probability
    ``scale * (1 - d/queue_length)``.
    """

    name = "mrloc"

    def __init__(self, config: BaselineConfig = BaselineConfig(), seed: int = 0,
                 rows_per_bank: int = 65536):
        super().__init__(config.blast_radius, rows_per_bank)
        self.config = config
        self.last_seen = np.full(rows_per_bank, -1.0)
        self.meta = np.array([float(config.mrloc_queue_length),
                              config.mrloc_probability_scale, 0.0])
        self.rng = RandomSource(seed)
        self.state = (self.last_seen, self.meta, self.rng.array)

    _activate = staticmethod(_mrloc_activate)
    _refresh = staticmethod(_noop_refresh)
    _reset_window = staticmethod(_rng_reset_window)

    def trr_probability(self, row: int) -> float:
        prev = self.last_seen[row]
        if prev < 0:
            return 0.0
        distance = self.meta[2] - prev - 1
        if distance >= self.meta[0]:
            return 0.0
        return float(mrloc_probability(distance, self.meta[0], self.meta[1]))


# -- reference trackers -------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _none_activate(st, row, tras, now):
    return -1


@nb.njit(cache=True)
def _none_reset_window(st, window):
    pass


class NoMitigation(Tracker):
    name = "none"

    def __init__(self, blast_radius: int = 2, rows_per_bank: int = 65536, seed: int = 0):
        super().__init__(blast_radius, rows_per_bank)
        self.state = (np.zeros(1),)

    _activate = staticmethod(_none_activate)
    _refresh = staticmethod(_noop_refresh)
    _reset_window = staticmethod(_none_reset_window)


@nb.njit(cache=True, inline="always")
def _oracle_activate(st, row, tras, now):
    counts, touched, meta = st
    c = counts[row]
    if c == 0:
        # first touch since reset; keep the list duplicate-free
        found = False
        for i in range(meta[0]):
            if touched[i] == row:
                found = True
                break
        if not found:
            touched[meta[0]] = row
            meta[0] += 1
    counts[row] = c + 1
    return -1


@nb.njit(cache=True)
def _oracle_refresh(st, cmd, now):
    counts, touched, meta = st
    best = -1
    best_count = 0
    for i in range(meta[0]):
        r = touched[i]
        if counts[r] > best_count:
            best_count = counts[r]
            best = r
    if best < 0:
        return -1
    counts[best] = 0
    return best


@nb.njit(cache=True)
def _oracle_reset_window(st, window):
    counts, touched, meta = st
    for i in range(meta[0]):
        counts[touched[i]] = 0
    meta[0] = 0


class ExactOracle(Tracker):
    """Keeps exact per-row counts and mitigates the true maximum every refresh."""

    name = "oracle"

    def __init__(self, blast_radius: int = 2, rows_per_bank: int = 65536, seed: int = 0):
        super().__init__(blast_radius, rows_per_bank)
        self.counts = np.zeros(rows_per_bank, dtype=np.int64)
        self.touched = np.zeros(rows_per_bank, dtype=np.int64)
        self.meta = np.zeros(3, dtype=np.int64)
        self.state = (self.counts, self.touched, self.meta)

    _activate = staticmethod(_oracle_activate)
    _refresh = staticmethod(_oracle_refresh)
    _reset_window = staticmethod(_oracle_reset_window)
