"""Activation-stream generators and the plain-text trace format.

Every generated stream fills each refresh interval with exactly
``mpa_per_refi`` activations spaced ``tRCmin`` apart, starting at the
interval boundary; the refresh command occupies the last ``tRFC`` of the
interval. Time is continuous across windows: window ``w`` covers
``[w*tREFWe, (w+1)*tREFWe)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numba as nb
import numpy as np

from .core import RandomSource, rng_uniform
from .errors import PatternError, TraceError
from .timing import TABLE1, TimingConfig, mpa_per_refi

KINDS = ("trrespass", "random", "decoy_flood", "graphene_adversarial", "trace", "weighted")
SIDES = ("single", "double")

_ZIPF = re.compile(r"^zipf\s*(?::\s*([0-9.e+-]+|inf)|\(\s*([0-9.e+-]+|inf)\s*\))$")


@dataclass(frozen=True)
class PatternSpec:
    kind: str = "trrespass"
    n_rows: int = 1
    side: str = "double"
    weights: Union[str, tuple] = "uniform"
    base_row: int = 1000
    tras_ns: Union[None, float, tuple] = None  # None means tRASmin
    seed: int = 0
    blast_radius: int = 2
    decoy_ratio: int = 2  # decoy slots per aggressor slot
    burst_length: Optional[int] = None  # default mpa_per_refi
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PatternError(f"unknown pattern kind {self.kind!r}; expected one of {KINDS}")
        if self.side not in SIDES:
            raise PatternError(f"side must be 'single' or 'double', got {self.side!r}")
        if self.n_rows < 1:
            raise PatternError("n_rows must be >= 1")
        if self.blast_radius < 1:
            raise PatternError("blast_radius must be >= 1")
        if self.decoy_ratio < 1:
            raise PatternError("decoy_ratio must be >= 1")
        if self.burst_length is not None and self.burst_length < 1:
            raise PatternError("burst_length must be >= 1")
        if self.kind == "trace" and not self.trace_path:
            raise PatternError("trace pattern needs trace_path")
        if isinstance(self.weights, list):
            object.__setattr__(self, "weights", tuple(self.weights))
        if isinstance(self.tras_ns, list):
            object.__setattr__(self, "tras_ns", tuple(self.tras_ns))

    @property
    def uses_seed(self) -> bool:
        return self.kind in ("random", "weighted")

    def with_(self, **changes) -> "PatternSpec":
        from dataclasses import replace
        return replace(self, **changes)

    def label(self) -> str:
        if self.kind == "weighted":
            w = self.weights if isinstance(self.weights, str) else "explicit"
            return f"weighted:{w}"
        return self.kind


@dataclass
class ActivationStream:
    """Parallel arrays of activations in nondecreasing time order."""

    rows: np.ndarray
    times_ns: np.ndarray
    tras_ns: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.times_ns = np.asarray(self.times_ns, dtype=np.float64)
        self.tras_ns = np.asarray(self.tras_ns, dtype=np.float64)
        if not len(self.rows) == len(self.times_ns) == len(self.tras_ns):
            raise ValueError("stream arrays differ in length")

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ActivationStream):
            return NotImplemented
        return (np.array_equal(self.rows, other.rows)
                and np.array_equal(self.times_ns, other.times_ns)
                and np.array_equal(self.tras_ns, other.tras_ns))

    def records(self):
        for t, r, a in zip(self.times_ns, self.rows, self.tras_ns):
            yield float(t), int(r), float(a)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0))


# -- layout ------------------------------------------------------------------

def aggressor_rows(n: int, side: str = "double", blast_radius: int = 2, base_row: int = 1000,
                   rows_per_bank: int = 65536) -> np.ndarray:
    """Place ``n`` aggressors.

    Double-sided: victims ``v_i = base_row + 1 + i*(3 + 2*blast)`` with
    aggressors ``v_i - 1`` and ``v_i + 1`` (an odd ``n`` leaves the last
    victim single-sided). Single-sided: aggressors ``2*blast + 1`` apart.
    Groups sit ``2*blast`` rows apart, so no aggressor disturbs another
    group's victims.
    """
    if n < 1:
        raise PatternError("need at least one aggressor")
    if side == "double":
        spacing = 3 + 2 * blast_radius
        i = np.arange(n)
        victims = base_row + 1 + (i // 2) * spacing
        rows = victims + np.where(i % 2 == 0, -1, 1)
    else:
        rows = base_row + np.arange(n) * (2 * blast_radius + 1)
    if rows.min() < 0 or rows.max() >= rows_per_bank:
        raise PatternError(f"{n} aggressors from base_row {base_row} do not fit in the bank")
    return rows.astype(np.int64)


def victim_rows(spec: PatternSpec, rows_per_bank: int = 65536) -> np.ndarray:
    """Rows sandwiched between two aggressors of a double-sided layout."""
    if spec.side != "double":
        return np.zeros(0, np.int64)
    aggs = aggressor_rows(spec.n_rows, "double", spec.blast_radius, spec.base_row, rows_per_bank)
    return (aggs[0:len(aggs) - 1:2] + 1)[: spec.n_rows // 2]


def decoy_rows(count: int, after_row: int, blast_radius: int, rows_per_bank: int) -> np.ndarray:
    start = after_row + 2 * blast_radius + 1
    if count and start + count > rows_per_bank:
        raise PatternError(f"{count} decoy rows do not fit in the bank")
    return np.arange(start, start + count, dtype=np.int64)


# -- scheduling --------------------------------------------------------------

def _schedule(cfg: TimingConfig, windows: int, start_window: int):
    """Activation times for every slot, shape (intervals, mpa)."""
    mpa = mpa_per_refi(cfg)
    cmds = cfg.refresh_cmds_per_window
    first = start_window * cmds
    k = np.arange(first, first + windows * cmds, dtype=np.float64)
    starts = k * float(cfg.tREFIe_ns)
    offsets = np.arange(mpa, dtype=np.float64) * float(cfg.tRCmin_ns)
    return starts[:, None] + offsets[None, :]


def _tras_values(spec: PatternSpec, cfg: TimingConfig, total: int, first_slot: int) -> np.ndarray:
    if spec.tras_ns is None:
        return np.full(total, float(cfg.tRASmin_ns))
    if isinstance(spec.tras_ns, tuple):
        vals = np.asarray(spec.tras_ns, dtype=np.float64)
        if len(vals) == 0:
            raise PatternError("tras_ns list is empty")
        idx = (np.arange(total) + first_slot) % len(vals)
        out = vals[idx]
    else:
        out = np.full(total, float(spec.tras_ns))
    if np.any(out < float(cfg.tRASmin_ns)):
        raise PatternError("tras_ns below tRASmin")
    return out


def _build(spec, cfg, windows, start_window, slot_rows_fn) -> ActivationStream:
    times = _schedule(cfg, windows, start_window)
    n_int, mpa = times.shape
    first_slot = start_window * cfg.refresh_cmds_per_window * mpa
    rows = slot_rows_fn(first_slot, n_int, mpa)
    rows = np.asarray(rows, dtype=np.int64).reshape(n_int, mpa)
    total = n_int * mpa
    return ActivationStream(rows.ravel(), times.ravel(), _tras_values(spec, cfg, total, first_slot))


def _check_budget(spec: PatternSpec, cfg: TimingConfig):
    mpa = mpa_per_refi(cfg)
    if spec.n_rows > mpa:
        raise PatternError(f"n_rows {spec.n_rows} exceeds mpa_per_refi {mpa}")


def _layout(spec: PatternSpec, cfg: TimingConfig):
    return aggressor_rows(spec.n_rows, spec.side, spec.blast_radius, spec.base_row,
                          cfg.rows_per_bank)


# -- generators ---------------------------------------------------------------

def gen_trrespass(spec: PatternSpec, cfg: TimingConfig = TABLE1, windows: int = 1,
                  start_window: int = 0) -> ActivationStream:
    """Round-robin over the aggressors, continuing across interval boundaries."""
    _check_budget(spec, cfg)
    aggs = _layout(spec, cfg)

    def rows(first, n_int, mpa):
        return aggs[(np.arange(n_int * mpa, dtype=np.int64) + first) % len(aggs)]

    return _build(spec, cfg, windows, start_window, rows)


@nb.njit(cache=True)
def _shuffle_rows(block, rng):
    """Fisher-Yates shuffle of each row of a 2-D block, in place."""
    for i in range(block.shape[0]):
        for j in range(block.shape[1] - 1, 0, -1):
            k = min(np.int64(rng_uniform(rng) * (j + 1)), j)
            t = block[i, j]
            block[i, j] = block[i, k]
            block[i, k] = t


def gen_random(spec: PatternSpec, cfg: TimingConfig = TABLE1, windows: int = 1,
               start_window: int = 0) -> ActivationStream:
    """The round-robin multiset of each interval, shuffled within the interval."""
    _check_budget(spec, cfg)
    aggs = _layout(spec, cfg)

    def rows(first, n_int, mpa):
        out = np.empty((n_int, mpa), dtype=np.int64)
        per_window = cfg.refresh_cmds_per_window
        for i in range(0, n_int, per_window):
            w = start_window + i // per_window
            src = RandomSource(spec.seed)
            src.reseed_per_window(w)
            base = first + i * mpa
            block = aggs[(np.arange(per_window * mpa, dtype=np.int64) + base) % len(aggs)]
            block = block.reshape(per_window, mpa)
            _shuffle_rows(block, src.array)
            out[i:i + per_window] = block
        return out

    return _build(spec, cfg, windows, start_window, rows)


def gen_decoy_flood(spec: PatternSpec, cfg: TimingConfig = TABLE1, windows: int = 1,
                    start_window: int = 0) -> ActivationStream:
    """One aggressor in every ``decoy_ratio + 1`` slots; decoys rotate through a pool.

    ``n_rows`` counts the aggressor plus ``n_rows - 1`` decoys. With no
    decoys this is a single-row hammer. Each decoy's rate is
    ``ratio / ((ratio + 1) * pool)``, so the pool must exceed the ratio for
    the aggressor to stay strictly the most frequent row.
    """
    pool = spec.n_rows - 1
    ratio = spec.decoy_ratio
    if 0 < pool <= ratio:
        raise PatternError(f"decoy pool {pool} must exceed decoy_ratio {ratio}")
    agg = aggressor_rows(1, "single", spec.blast_radius, spec.base_row, cfg.rows_per_bank)[0]
    decoys = decoy_rows(pool, int(agg), spec.blast_radius, cfg.rows_per_bank)

    def rows(first, n_int, mpa):
        slot = np.arange(n_int * mpa, dtype=np.int64) + first
        if pool == 0:
            return np.full(len(slot), agg, dtype=np.int64)
        period = ratio + 1
        is_agg = slot % period == 0
        decoy_index = slot - slot // period - 1  # count of decoy slots before this one
        return np.where(is_agg, agg, decoys[decoy_index % pool])

    return _build(spec, cfg, windows, start_window, rows)


def gen_graphene_adversarial(spec: PatternSpec, cfg: TimingConfig = TABLE1, c: Optional[int] = None,
                             windows: int = 1, start_window: int = 0) -> ActivationStream:
    """``c + 1`` equal-rate aggressors in sequential bursts (whole burst, then the next row)."""
    if c is not None:
        spec = spec.with_(n_rows=c + 1)
    aggs = _layout(spec, cfg)
    burst = spec.burst_length or mpa_per_refi(cfg)

    def rows(first, n_int, mpa):
        slot = np.arange(n_int * mpa, dtype=np.int64) + first
        return aggs[(slot // burst) % len(aggs)]

    return _build(spec, cfg, windows, start_window, rows)


def parse_weights(weights, n: int) -> np.ndarray:
    """Probability vector for ``uniform``, ``zipf:s`` / ``zipf(s)``, or an explicit list."""
    if isinstance(weights, str):
        w = weights.strip().lower()
        if w == "uniform":
            return np.full(n, 1.0 / n)
        m = _ZIPF.match(w)
        if m is None:
            raise PatternError(f"malformed weights {weights!r}")
        try:
            s = float(m.group(1) or m.group(2))
        except ValueError:
            raise PatternError(f"malformed weights {weights!r}") from None
        if not s >= 0:
            raise PatternError("zipf exponent must be non-negative")
        if math.isinf(s):
            p = np.zeros(n)
            p[0] = 1.0
            return p
        logp = -s * np.log(np.arange(1, n + 1, dtype=np.float64))
        p = np.exp(logp - logp.max())
        return p / p.sum()
    p = np.asarray(weights, dtype=np.float64)
    if p.ndim != 1 or len(p) != n:
        raise PatternError(f"explicit weights need {n} entries, got {p.size}")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise PatternError("weights must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise PatternError(f"weights sum to {p.sum()}, not 1")
    return p


def gen_weighted(spec: PatternSpec, cfg: TimingConfig = TABLE1, windows: int = 1,
                 start_window: int = 0) -> ActivationStream:
    """Each slot draws an aggressor independently from the weight vector."""
    _check_budget(spec, cfg)
    aggs = _layout(spec, cfg)
    p = parse_weights(spec.weights, len(aggs))

    def rows(first, n_int, mpa):
        out = np.empty(n_int * mpa, dtype=np.int64)
        per_window = cfg.refresh_cmds_per_window * mpa
        for i in range(0, len(out), per_window):
            w = start_window + i // per_window
            rng = np.random.default_rng([spec.seed, w, 1])
            out[i:i + per_window] = aggs[rng.choice(len(aggs), size=per_window, p=p)]
        return out

    return _build(spec, cfg, windows, start_window, rows)


GENERATORS = {
    "trrespass": gen_trrespass,
    "random": gen_random,
    "decoy_flood": gen_decoy_flood,
    "graphene_adversarial": gen_graphene_adversarial,
    "weighted": gen_weighted,
}


def generate(spec: PatternSpec, cfg: TimingConfig = TABLE1, windows: int = 1,
             start_window: int = 0) -> ActivationStream:
    if spec.kind == "trace":
        stream = load_trace(spec.trace_path)
        lo = start_window * float(cfg.tREFWe_ns)
        hi = (start_window + windows) * float(cfg.tREFWe_ns)
        a, b = np.searchsorted(stream.times_ns, [lo, hi], side="left")
        return ActivationStream(stream.rows[a:b], stream.times_ns[a:b], stream.tras_ns[a:b])
    return GENERATORS[spec.kind](spec, cfg, windows=windows, start_window=start_window)


def interval_offsets(stream: ActivationStream, cfg: TimingConfig, window: int) -> np.ndarray:
    """Boundaries of each refresh interval of ``window`` within ``stream``.

    Raises ``PatternError`` if an activation falls inside a refresh command
    or outside the window.
    """
    cmds = cfg.refresh_cmds_per_window
    refi = float(cfg.tREFIe_ns)
    t = stream.times_ns
    k = np.floor(t / refi)
    first = window * cmds
    if len(t) and (k.min() < first or k.max() >= first + cmds):
        raise PatternError(f"stream has activations outside window {window}")
    busy_from = refi - float(cfg.tRFC_ns)
    if len(t) and np.any(t - k * refi >= busy_from):
        bad = int(np.argmax(t - k * refi >= busy_from))
        raise PatternError(f"activation at {t[bad]} ns overlaps a refresh command")
    bounds = (first + np.arange(cmds + 1)) * refi
    return np.searchsorted(t, bounds, side="left").astype(np.int64)


# -- traces ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_trace(stream: ActivationStream, fh, header: bool = True) -> None:
    if header:
        fh.write("time_ns,row,tras_ns\n")
    for t, r, a in stream.records():
        fh.write(f"{_fmt(t)},{r},{_fmt(a)}\n")


def dump_trace(stream: ActivationStream, path, header: bool = True) -> None:
    with Path(path).open("w") as fh:
        write_trace(stream, fh, header)


def load_trace(path) -> ActivationStream:
    times, rows, tras = [], [], []
    last = -math.inf
    with Path(path).open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts == ["time_ns", "row", "tras_ns"]:
                continue
            if len(parts) != 3:
                raise TraceError(f"expected 3 fields, got {len(parts)}", line=lineno)
            try:
                t = float(parts[0])
                r = int(parts[1])
                a = float(parts[2])
            except ValueError as exc:
                raise TraceError(str(exc), line=lineno) from None
            if not (math.isfinite(t) and math.isfinite(a)) or r < 0 or a < 0:
                raise TraceError("negative or non-finite field", line=lineno)
            if t < last:
                raise TraceError(f"time {parts[0]} earlier than previous event", line=lineno)
            last = t
            times.append(t)
            rows.append(r)
            tras.append(a)
    return ActivationStream(np.array(rows, np.int64), np.array(times), np.array(tras))


def stream_from_records(records: Sequence[tuple]) -> ActivationStream:
    if not records:
        return ActivationStream.empty()
    t, r, a = zip(*records)
    return ActivationStream(np.array(r, np.int64), np.array(t, np.float64), np.array(a, np.float64))
