"""Shared machinery for every tracker: count tables, TRR actions, randomness.

The per-event update rules of each tracker are numba ``@njit`` functions over a
tuple of numpy arrays (the tracker's *state*). The Python ``Tracker`` methods
call those same functions, and the simulation kernel in :mod:`dsacsim.engine`
inlines them, so there is one definition of every rule.

Randomness
----------
``RandomSource`` keeps its state in a ``uint64[3]`` array ``[state, seed, mode]``.

* ``exact`` mode: SplitMix64; ``random_uniform`` returns the top 53 bits as a
  double in [0, 1).
* ``lfsr20`` mode: 20-bit Galois LFSR with feedback polynomial
  x^20 + x^17 + 1 (toggle mask 0x90000), period 2^20 - 1;
  ``random_uniform`` returns ``state / 2**20`` after one step.

Per-window reseeding sets ``state = mix64(seed + GOLDEN * (window + 1))``
(low 20 bits, zero mapped to 1, in lfsr20 mode), where ``mix64`` is the
SplitMix64 finalizer. The sequence of window ``w`` is therefore a pure
function of ``(seed, w)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

EXACT = 0
LFSR20 = 1
MODES = {"exact": EXACT, "exact-uniform": EXACT, "lfsr20": LFSR20}

LFSR_BITS = 20
LFSR_MASK = (1 << LFSR_BITS) - 1
LFSR_TOGGLE = 0x90000  # x^20 + x^17 + 1
LFSR_POLYNOMIAL = "x^20 + x^17 + 1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0
_INV20 = 1.0 / (1 << LFSR_BITS)

EMPTY = -1


# -- borrowed state views ----------------------------------------------------

@intrinsic
def borrow_arrays(typingctx, tup):
    """Same arrays, without NRT ownership.

    Every njit call that touches an owned array pays atomic incref/decref
    pairs, which dominates a per-activation update. The views returned here
    carry a null meminfo, so those become no-ops. Only valid while the
    caller keeps the original arrays alive (true for a kernel call).
    """
    if not isinstance(tup, types.BaseTuple) or not all(isinstance(t, types.Array) for t in tup):
        return None

    def codegen(context, builder, signature, args):
        items = []
        for i, aty in enumerate(tup):
            src = context.make_array(aty)(context, builder, value=builder.extract_value(args[0], i))
            dst = context.make_array(aty)(context, builder)
            dst.data = src.data
            dst.shape = src.shape
            dst.strides = src.strides
            dst.itemsize = src.itemsize
            dst.meminfo = cgutils.get_null_value(dst.meminfo.type)
            dst.parent = cgutils.get_null_value(dst.parent.type)
            items.append(dst._getvalue())
        return context.make_tuple(builder, tup, items)

    return tup(tup), codegen


# -- random source -----------------------------------------------------------

@nb.njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def lfsr20_step(rng):
    s = rng[0]
    lsb = s & np.uint64(1)
    s >>= np.uint64(1)
    if lsb:
        s ^= np.uint64(LFSR_TOGGLE)
    rng[0] = s
    return s


@nb.njit(cache=True)
def rng_uniform(rng):
    if rng[2] == LFSR20:
        return float(lfsr20_step(rng)) * _INV20
    rng[0] += _GOLDEN
    return float(mix64(rng[0]) >> np.uint64(11)) * _INV53


@nb.njit(cache=True)
def rng_bits20(rng):
    """Next 20-bit draw: the LFSR state, or the top 20 bits in exact mode."""
    if rng[2] == LFSR20:
        return np.int64(lfsr20_step(rng))
    rng[0] += _GOLDEN
    return np.int64(mix64(rng[0]) >> np.uint64(64 - LFSR_BITS))


@nb.njit(cache=True)
def rng_reseed_window(rng, window):
    h = mix64(rng[1] + _GOLDEN * np.uint64(window + 1))
    if rng[2] == LFSR20:
        h &= np.uint64(LFSR_MASK)
        if h == 0:
            h = np.uint64(1)
    rng[0] = h


@nb.njit(cache=True)
def accept_replacement(rng, min_count):
    """Stochastic-replacement test r <= 1/(min+1).

    In lfsr20 mode the probability comes from a lookup of
    floor(2^20 / (min+1)) and the test is ``draw < entry``.
    """
    if rng[2] == LFSR20:
        lut = np.int64((1 << LFSR_BITS) / (min_count + 1.0))
        return np.int64(lfsr20_step(rng)) < lut
    return rng_uniform(rng) <= 1.0 / (min_count + 1.0)


class RandomSource:
    """Seeded, replayable uniform source shared by the probabilistic trackers."""

    def __init__(self, seed: int = 0, mode: str = "exact"):
        if mode not in MODES:
            raise ValueError(f"unknown random mode {mode!r}")
        self.mode = mode
        self.array = np.zeros(3, dtype=np.uint64)
        self.array[2] = MODES[mode]
        self.reseed(seed)

    @property
    def seed(self) -> int:
        return int(self.array[1])

    @property
    def state(self) -> int:
        return int(self.array[0])

    def reseed(self, seed: int) -> None:
        self.array[1] = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        rng_reseed_window(self.array, 0)

    def reseed_per_window(self, window_index: int) -> None:
        rng_reseed_window(self.array, window_index)

    def random_uniform(self) -> float:
        return rng_uniform(self.array)

    def bits20(self) -> int:
        return int(rng_bits20(self.array))


# -- count table -------------------------------------------------------------

@nb.njit(cache=True)
def table_lookup(rows, row):
    for i in range(rows.shape[0]):
        if rows[i] == row:
            return i
    return -1


@nb.njit(cache=True)
def table_min(rows, counts):
    """Minimum-count occupied entry; ties go to the lowest index."""
    pos = -1
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY and (pos < 0 or counts[i] < counts[pos]):
            pos = i
    return pos


@nb.njit(cache=True)
def table_max(rows, counts):
    """Maximum-count occupied entry; ties go to the highest index."""
    pos = -1
    for i in range(rows.shape[0]):
        if rows[i] != EMPTY and (pos < 0 or counts[i] >= counts[pos]):
            pos = i
    return pos


@nb.njit(cache=True)
def first_empty(rows):
    for i in range(rows.shape[0]):
        if rows[i] == EMPTY:
            return i
    return -1


class EmptyTableError(LookupError):
    pass


class CountTable:
    """Fixed-capacity (row, count) table.

    Holds views onto numpy arrays, so a tracker's table and its compiled
    state are the same memory. Empty entries have row ``-1`` and count 0.
    """

    def __init__(self, capacity: int, rows=None, counts=None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.rows = np.full(capacity, EMPTY, dtype=np.int64) if rows is None else rows
        self.counts = np.zeros(capacity, dtype=np.float64) if counts is None else counts

    @classmethod
    def from_entries(cls, entries, capacity=None):
        table = cls(capacity or len(entries))
        for i, (row, count) in enumerate(entries):
            if row is None:
                continue
            if table.lookup(row) is not None:
                raise ValueError(f"duplicate row {row}")
            table.rows[i] = row
            table.counts[i] = count
        return table

    @property
    def capacity(self) -> int:
        return len(self.rows)

    def __len__(self):
        return int(np.count_nonzero(self.rows != EMPTY))

    def __contains__(self, row):
        return self.lookup(row) is not None

    def is_full(self) -> bool:
        return len(self) == self.capacity

    def entries(self):
        return [
            (None if r == EMPTY else int(r), float(c))
            for r, c in zip(self.rows, self.counts)
        ]

    def as_dict(self):
        return {int(r): float(c) for r, c in zip(self.rows, self.counts) if r != EMPTY}

    def lookup(self, row) -> Optional[int]:
        pos = table_lookup(self.rows, row)
        return None if pos < 0 else int(pos)

    def min(self) -> tuple[int, float]:
        pos = table_min(self.rows, self.counts)
        if pos < 0:
            raise EmptyTableError("min of an empty count table")
        return int(pos), float(self.counts[pos])

    def max(self) -> tuple[int, float]:
        pos = table_max(self.rows, self.counts)
        if pos < 0:
            raise EmptyTableError("max of an empty count table")
        return int(pos), float(self.counts[pos])

    def total(self) -> float:
        return float(self.counts[self.rows != EMPTY].sum())

    def check_invariants(self) -> None:
        occupied = self.rows[self.rows != EMPTY]
        assert len(occupied) <= self.capacity
        assert len(set(occupied.tolist())) == len(occupied), "duplicate rows"
        assert np.all(self.counts[self.rows == EMPTY] == 0), "empty entry with count"


# -- TRR actions and the tracker contract ------------------------------------

def victims_of(aggressor: int, blast_radius: int, rows_per_bank: int) -> tuple[int, ...]:
    out = []
    for d in range(blast_radius, 0, -1):
        if aggressor - d >= 0:
            out.append(aggressor - d)
    for d in range(1, blast_radius + 1):
        if aggressor + d < rows_per_bank:
            out.append(aggressor + d)
    return tuple(out)


@dataclass(frozen=True)
class TrrAction:
    aggressor: Optional[int] = None
    victims: tuple = field(default_factory=tuple)
    refresh_cmd_index: int = -1

    @property
    def is_noop(self) -> bool:
        return self.aggressor is None


class Tracker:
    """Base class for mitigation trackers.

    Subclasses set ``state`` (a tuple of numpy arrays) and provide three
    njit functions as static methods::

        _activate(state, row, tras_ns, now_ns) -> aggressor or -1
        _refresh(state, cmd_index, now_ns) -> aggressor or -1
        _reset_window(state, window_index) -> None

    ``_activate`` returns an aggressor only for trackers that mitigate
    immediately (PARA, MRLoc); the rest act at refresh commands.
    """

    name = "tracker"
    counters = 0

    def __init__(self, blast_radius: int = 2, rows_per_bank: int = 65536):
        if blast_radius < 1:
            raise ValueError("blast_radius must be >= 1")
        self.blast_radius = blast_radius
        self.rows_per_bank = rows_per_bank
        self.state: tuple = ()

    def _action(self, aggressor, cmd_index) -> TrrAction:
        if aggressor < 0:
            return TrrAction(None, (), cmd_index)
        aggressor = int(aggressor)
        return TrrAction(
            aggressor, victims_of(aggressor, self.blast_radius, self.rows_per_bank), cmd_index
        )

    def _check_row(self, row):
        if not 0 <= row < self.rows_per_bank:
            raise ValueError(f"row {row} outside [0, {self.rows_per_bank})")

    def on_activation(self, row: int, tras_ns: float = 0.0, now_ns: int = 0) -> Optional[TrrAction]:
        self._check_row(row)
        agg = self._activate(self.state, row, float(tras_ns), now_ns)
        return None if agg < 0 else self._action(agg, -1)

    def on_refresh(self, cmd_index: int, now_ns: int = 0) -> TrrAction:
        return self._action(self._refresh(self.state, cmd_index, now_ns), cmd_index)

    def reset_window(self, window_index: int = 0) -> None:
        self._reset_window(self.state, window_index)

    def describe(self) -> dict:
        return {"algorithm": self.name, "blast_radius": self.blast_radius}
