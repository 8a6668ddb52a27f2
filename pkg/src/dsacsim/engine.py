"""Discrete-event simulation of one DRAM bank under an attack pattern.

Each refresh interval delivers its activations to the tracker, then the
refresh command at the end of the interval gives the tracker a chance to
TRR one aggressor. A per-row disturbance ledger counts activations since the
row's last TRR (and, by default, since the start of the window); the
Maximum Disturbance of a window is the largest ledger value reached.

The hot loop is a numba kernel specialised per tracker class; it calls the
tracker's own ``_activate``/``_refresh`` functions, so the fast path and the
reference loop (:func:`run_reference`) share every update rule.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numba as nb
import numpy as np

from .baselines import (
    PARA,
    BaselineConfig,
    ExactOracle,
    Graphene,
    MRLoc,
    NoMitigation,
    PRoHIT,
    TWiCe,
)
from .core import Tracker, borrow_arrays
from .dsac import DSAC, DsacConfig, SpaceSaving
from .errors import ConfigError, PatternError, RefreshBudgetWarning
from .patterns import ActivationStream, PatternSpec, generate, interval_offsets
from .timing import TABLE1, TimingConfig, mpa_per_refi, refresh_work_budget, required_refresh_budget

CSV_COLUMNS = ("algo", "pattern", "n_rows", "counters", "seed", "window", "max_disturbance",
               "avg_disturbance", "trr_count", "bitflip")
SUMMARY_COLUMNS = ("algo", "pattern", "counters", "stat", "value")

ALGORITHMS = ("dsac", "space_saving", "graphene", "twice", "para", "prohit", "mrloc",
              "oracle", "none")


# -- tracker construction ------------------------------------------------------

def build_tracker(algorithm: str, cfg: TimingConfig = TABLE1, seed: int = 0,
                  counters: Optional[int] = None, **options) -> Tracker:
    """Instantiate a tracker by algorithm name with options from a config section."""
    rows = cfg.rows_per_bank
    blast = int(options.pop("blast_radius", 2))
    try:
        if algorithm in ("dsac", "space_saving"):
            kw = dict(options)
            if counters is not None:
                kw["capacity"] = counters
            kw.setdefault("rh_threshold", cfg.rh_threshold)
            dcfg = DsacConfig(blast_radius=blast, **kw)
            cls = DSAC if algorithm == "dsac" else SpaceSaving
            return cls(dcfg, seed=seed, rows_per_bank=rows, trasmin_ns=float(cfg.tRASmin_ns))
        if algorithm in ("graphene", "twice", "para", "prohit", "mrloc"):
            kw = dict(options)
            if counters is not None:
                kw["capacity"] = counters
            bcfg = BaselineConfig(algorithm=algorithm, blast_radius=blast, **kw)
            if algorithm == "graphene":
                return Graphene(bcfg, rh_threshold=cfg.rh_threshold, rows_per_bank=rows)
            if algorithm == "twice":
                return TWiCe(bcfg, rh_threshold=cfg.rh_threshold,
                             refresh_cmds_per_window=cfg.refresh_cmds_per_window,
                             rows_per_bank=rows)
            cls = {"para": PARA, "prohit": PRoHIT, "mrloc": MRLoc}[algorithm]
            return cls(bcfg, seed=seed, rows_per_bank=rows)
        if algorithm == "oracle":
            return ExactOracle(blast, rows)
        if algorithm == "none":
            return NoMitigation(blast, rows)
    except TypeError as exc:
        raise ConfigError(f"{algorithm}: {exc}") from None
    raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def tracker_uses_seed(algorithm: str, options: Optional[dict] = None) -> bool:
    return algorithm in ("dsac", "para", "prohit", "mrloc")


def check_refresh_budget(cfg: TimingConfig, blast_radius: int) -> bool:
    """Warn when one refresh command cannot also fit a TRR's victim activations."""
    budget = refresh_work_budget(cfg)
    need = required_refresh_budget(blast_radius)
    if budget < need:
        warnings.warn(
            f"refresh budget floor(tRFC/tRCmin)={budget} < {need} needed for blast radius "
            f"{blast_radius}; TRR occupies a dedicated refresh command",
            RefreshBudgetWarning,
            stacklevel=2,
        )
        return False
    return True


# -- results -------------------------------------------------------------------

@dataclass
class DisturbanceReport:
    algorithm: str
    pattern: str
    n_rows: int
    counters: int
    seed: int
    window_max: list = field(default_factory=list)
    window_avg: list = field(default_factory=list)
    window_trr: list = field(default_factory=list)
    bitflip_threshold: int = 10000

    @property
    def max_disturbance(self) -> int:
        return max(self.window_max, default=0)

    @property
    def avg_disturbance(self) -> float:
        return float(np.mean(self.window_avg)) if self.window_avg else 0.0

    @property
    def trr_count(self) -> int:
        return int(sum(self.window_trr))

    @property
    def bitflip(self) -> bool:
        return self.max_disturbance >= self.bitflip_threshold

    def rows(self):
        for w, (mx, avg, trr) in enumerate(zip(self.window_max, self.window_avg, self.window_trr)):
            yield {
                "algo": self.algorithm,
                "pattern": self.pattern,
                "n_rows": self.n_rows,
                "counters": self.counters,
                "seed": self.seed,
                "window": w,
                "max_disturbance": int(mx),
                "avg_disturbance": f"{avg:.3f}",
                "trr_count": int(trr),
                "bitflip": int(mx >= self.bitflip_threshold),
            }

    def key(self):
        return (self.algorithm, self.pattern, self.n_rows, self.counters, self.seed)


def bitflip_threshold(cfg: TimingConfig, side: str) -> int:
    return cfg.rh_threshold // 2 if side == "double" else cfg.rh_threshold


# -- kernel --------------------------------------------------------------------

_KERNELS: dict = {}


def _make_kernel(activate, refresh):
    @nb.njit
    def kernel(owned_state, rows, times, tras, offsets, cmd_base, refi, rfc, ledger, peak,
               touched, n_touched):
        state = borrow_arrays(owned_state)
        trr = 0
        wmax = 0
        nt = n_touched[0]
        for k in range(offsets.shape[0] - 1):
            for j in range(offsets[k], offsets[k + 1]):
                r = rows[j]
                agg = activate(state, r, tras[j], times[j])
                v = ledger[r] + 1
                ledger[r] = v
                if peak[r] == 0:
                    touched[nt] = r
                    nt += 1
                if v > peak[r]:
                    peak[r] = v
                    if v > wmax:
                        wmax = v
                if agg >= 0:
                    ledger[agg] = 0
                    trr += 1
            agg = refresh(state, cmd_base + k, (cmd_base + k + 1) * refi - rfc)
            if agg >= 0:
                ledger[agg] = 0
                trr += 1
        n_touched[0] = nt
        return wmax, trr

    return kernel


def kernel_for(tracker: Tracker):
    cls = type(tracker)
    key = (cls._activate, cls._refresh)
    if key not in _KERNELS:
        _KERNELS[key] = _make_kernel(cls._activate, cls._refresh)
    return _KERNELS[key]


class Ledger:
    """Per-row activation counts since the last reset, plus per-window peaks."""

    def __init__(self, rows_per_bank: int):
        self.counts = np.zeros(rows_per_bank, dtype=np.int64)
        self.peak = np.zeros(rows_per_bank, dtype=np.int64)
        self.touched = np.zeros(rows_per_bank, dtype=np.int64)
        self.n_touched = np.zeros(1, dtype=np.int64)

    def start_window(self, reset_counts: bool):
        t = self.touched[: self.n_touched[0]]
        self.peak[t] = 0
        if reset_counts:
            self.counts[:] = 0
        self.n_touched[0] = 0

    def average_peak(self) -> float:
        t = self.touched[: self.n_touched[0]]
        return float(self.peak[t].mean()) if len(t) else 0.0


# -- runs ----------------------------------------------------------------------

def _windows_of(pattern: PatternSpec, cfg: TimingConfig, windows: int, streams=None):
    for w in range(windows):
        if streams is not None:
            yield w, streams(w)
        else:
            yield w, generate(pattern, cfg, windows=1, start_window=w)


def run_simulation(cfg: TimingConfig, pattern: PatternSpec, tracker: Tracker, windows: int = 4,
                   seed: int = 0, window_reset: bool = True, algorithm: Optional[str] = None,
                   stream_source: Optional[Callable[[int], ActivationStream]] = None,
                   ) -> DisturbanceReport:
    """Simulate ``windows`` consecutive refresh windows and report per-window maxima."""
    cfg.validate()
    if windows < 1:
        raise ConfigError("windows must be >= 1")
    if tracker.rows_per_bank != cfg.rows_per_bank:
        raise ConfigError("tracker and timing disagree on rows_per_bank")
    check_refresh_budget(cfg, tracker.blast_radius)
    kernel = kernel_for(tracker)
    ledger = Ledger(cfg.rows_per_bank)
    report = DisturbanceReport(
        algorithm or tracker.name, pattern.label(), pattern.n_rows,
        int(getattr(tracker, "counters", 0)), seed,
        bitflip_threshold=bitflip_threshold(cfg, pattern.side),
    )
    for w, stream in _windows_of(pattern, cfg, windows, stream_source):
        offsets = interval_offsets(stream, cfg, w)
        if len(stream) and (stream.rows.min() < 0 or stream.rows.max() >= cfg.rows_per_bank):
            raise PatternError("stream row outside the bank")
        ledger.start_window(window_reset or w == 0)
        tracker.reset_window(w)
        wmax, trr = kernel(tracker.state, stream.rows, stream.times_ns, stream.tras_ns, offsets,
                           w * cfg.refresh_cmds_per_window, float(cfg.tREFIe_ns),
                           float(cfg.tRFC_ns), ledger.counts, ledger.peak, ledger.touched,
                           ledger.n_touched)
        report.window_max.append(int(wmax))
        report.window_avg.append(ledger.average_peak())
        report.window_trr.append(int(trr))
    return report


def run_reference(cfg: TimingConfig, pattern: PatternSpec, tracker: Tracker, windows: int = 1,
                  seed: int = 0, window_reset: bool = True,
                  probe: Optional[Callable] = None, stream: Optional[ActivationStream] = None,
                  ) -> DisturbanceReport:
    """Pure-Python event loop over the public tracker contract.

    Slow, but observable: ``probe(tracker, window, cmd_index, ledger)`` runs
    just before each refresh command. ``stream`` overrides the generated
    stream (it must then cover all ``windows``).
    """
    cfg.validate()
    ledger = Ledger(cfg.rows_per_bank)
    report = DisturbanceReport(
        tracker.name, pattern.label(), pattern.n_rows, int(getattr(tracker, "counters", 0)), seed,
        bitflip_threshold=bitflip_threshold(cfg, pattern.side),
    )
    cmds = cfg.refresh_cmds_per_window
    for w in range(windows):
        if stream is not None:
            lo, hi = np.searchsorted(stream.times_ns,
                                     [w * float(cfg.tREFWe_ns), (w + 1) * float(cfg.tREFWe_ns)])
            s = ActivationStream(stream.rows[lo:hi], stream.times_ns[lo:hi], stream.tras_ns[lo:hi])
        else:
            s = generate(pattern, cfg, windows=1, start_window=w)
        offsets = interval_offsets(s, cfg, w)
        ledger.start_window(window_reset or w == 0)
        tracker.reset_window(w)
        wmax = trr = 0
        for k in range(cmds):
            for j in range(offsets[k], offsets[k + 1]):
                r = int(s.rows[j])
                action = tracker.on_activation(r, float(s.tras_ns[j]), float(s.times_ns[j]))
                if ledger.peak[r] == 0:
                    ledger.touched[ledger.n_touched[0]] = r
                    ledger.n_touched[0] += 1
                ledger.counts[r] += 1
                v = ledger.counts[r]
                if v > ledger.peak[r]:
                    ledger.peak[r] = v
                    wmax = max(wmax, int(v))
                if action is not None:
                    ledger.counts[action.aggressor] = 0
                    trr += 1
            if probe is not None:
                probe(tracker, w, w * cmds + k, ledger)
            now = (w * cmds + k + 1) * float(cfg.tREFIe_ns) - float(cfg.tRFC_ns)
            action = tracker.on_refresh(w * cmds + k, now)
            if not action.is_noop:
                ledger.counts[action.aggressor] = 0
                trr += 1
        report.window_max.append(wmax)
        report.window_avg.append(ledger.average_peak())
        report.window_trr.append(trr)
    return report


# -- sweeps ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrackerSpec:
    """A named tracker configuration; ``counters`` sweeps override ``capacity``."""

    name: str
    algorithm: str
    options: tuple = ()

    def build(self, cfg: TimingConfig, seed: int, counters: Optional[int] = None) -> Tracker:
        return build_tracker(self.algorithm, cfg, seed=seed, counters=counters, **dict(self.options))

    @property
    def uses_seed(self) -> bool:
        return tracker_uses_seed(self.algorithm)

    def counters_for(self, counters: Optional[int]) -> int:
        if counters is not None:
            return counters
        return int(dict(self.options).get("capacity", 20))


def sweep(cfg: TimingConfig, pattern: PatternSpec, n_rows: Iterable[int],
          counters: Sequence[Optional[int]], seeds: Sequence[int], trackers: Sequence[TrackerSpec],
          windows: int = 4, window_reset: bool = True,
          progress: Optional[Callable[[DisturbanceReport], None]] = None) -> list[DisturbanceReport]:
    """Cross product of n_rows x counters x seeds x trackers.

    Each window's stream is generated once and shared by all trackers. A
    deterministic tracker on a seed-independent pattern gives the same
    result for every seed, so it is simulated once and the result reused.
    """
    n_list = list(n_rows)
    seeds = list(seeds)
    counters = list(counters) or [None]
    if not n_list or not seeds or not trackers:
        raise ConfigError("sweep ranges must be nonempty")
    reports = []
    for n in n_list:
        shared: dict = {}  # windows of a seed-independent stream, reused across seeds
        for seed in seeds:
            spec = pattern.with_(n_rows=n, seed=seed)
            cache = shared if not spec.uses_seed else {}

            def streams(w, spec=spec, cache=cache):
                if w not in cache:
                    if spec.uses_seed:
                        cache.clear()
                    cache[w] = generate(spec, cfg, windows=1, start_window=w)
                return cache[w]

            # run window-major so each stream is generated once per window
            runs = []
            for c in counters:
                for ts in trackers:
                    reuse = (not ts.uses_seed and not spec.uses_seed and seed != seeds[0])
                    runs.append((c, ts, reuse))
            pending = [(c, ts) for c, ts, reuse in runs if not reuse]
            results = _run_many(cfg, spec, pending, seed, windows, window_reset, streams)
            for c, ts, reuse in runs:
                if reuse:
                    src = next(r for r in reports if r.algorithm == ts.name and r.n_rows == n
                               and r.counters == ts.counters_for(c) and r.seed == seeds[0])
                    rep = DisturbanceReport(src.algorithm, src.pattern, n, src.counters, seed,
                                            list(src.window_max), list(src.window_avg),
                                            list(src.window_trr), src.bitflip_threshold)
                else:
                    rep = results[(c, ts.name)]
                reports.append(rep)
                if progress:
                    progress(rep)
    reports.sort(key=lambda r: r.key())
    return reports


def _run_many(cfg, spec, pending, seed, windows, window_reset, streams):
    states = []
    for c, ts in pending:
        tracker = ts.build(cfg, seed, c)
        check_refresh_budget(cfg, tracker.blast_radius)
        report = DisturbanceReport(ts.name, spec.label(), spec.n_rows, ts.counters_for(c), seed,
                                   bitflip_threshold=bitflip_threshold(cfg, spec.side))
        states.append((c, ts, tracker, Ledger(cfg.rows_per_bank), report))
    if not states:
        return {}
    for w in range(windows):
        stream = streams(w)
        offsets = interval_offsets(stream, cfg, w)
        for c, ts, tracker, ledger, report in states:
            ledger.start_window(window_reset or w == 0)
            tracker.reset_window(w)
            wmax, trr = kernel_for(tracker)(
                tracker.state, stream.rows, stream.times_ns, stream.tras_ns, offsets,
                w * cfg.refresh_cmds_per_window, float(cfg.tREFIe_ns), float(cfg.tRFC_ns),
                ledger.counts, ledger.peak, ledger.touched, ledger.n_touched)
            report.window_max.append(int(wmax))
            report.window_avg.append(ledger.average_peak())
            report.window_trr.append(int(trr))
    return {(c, ts.name): report for c, ts, _, _, report in states}


def summarize(reports: Sequence[DisturbanceReport]) -> list[dict]:
    """Average and Maximum of the per-n_rows maxima, per (algo, pattern, counters).

    The per-n_rows value is the maximum over seeds and windows. ``Average``
    is the arithmetic mean of those values over the n_rows axis.
    """
    per_config: dict = {}
    for r in reports:
        key = (r.algorithm, r.pattern, r.counters)
        cur = per_config.setdefault(key, {})
        cur[r.n_rows] = max(cur.get(r.n_rows, 0), r.max_disturbance)
    out = []
    for (algo, pattern, counters), by_n in sorted(per_config.items()):
        vals = list(by_n.values())
        out.append({"algo": algo, "pattern": pattern, "counters": counters,
                    "stat": "Average", "value": f"{float(np.mean(vals)):.1f}"})
        out.append({"algo": algo, "pattern": pattern, "counters": counters,
                    "stat": "Maximum", "value": str(int(max(vals)))})
    return out


def max_by_n_rows(reports: Sequence[DisturbanceReport], algorithm: str, pattern: str,
                  counters: Optional[int] = None) -> dict:
    out: dict = {}
    for r in reports:
        if r.algorithm == algorithm and r.pattern == pattern and (
                counters is None or r.counters == counters):
            out[r.n_rows] = max(out.get(r.n_rows, 0), r.max_disturbance)
    return dict(sorted(out.items()))


def write_csv(reports: Sequence[DisturbanceReport], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in sorted(reports, key=lambda r: r.key()):
        for row in r.rows():
            writer.writerow(row)


def write_summary_csv(reports: Sequence[DisturbanceReport], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in summarize(reports):
        writer.writerow(row)


def reports_to_csv(reports: Sequence[DisturbanceReport]) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()
