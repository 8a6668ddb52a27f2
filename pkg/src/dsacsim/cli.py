"""Command line runner: simulate, sweep, analyze, dump-trace.

Exit status: 0 on success, 2 on configuration, pattern or parameter
errors, 3 on I/O errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

from . import analysis
from .config import PRESETS, ExperimentConfig, load_config, load_preset, parse_int_list
from .engine import sweep, write_csv, write_summary_csv
from .errors import ConfigError, PatternError, TraceError
from .patterns import generate, write_trace
from .timing import mpa_per_refi, mpa_per_refw

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


# -- shared plumbing ---------------------------------------------------------------

def _load(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seeds = parse_int_list(args.seed, "--seed")
    if getattr(args, "windows", None) is not None:
        cfg.windows = args.windows
    if getattr(args, "window_reset", None) is not None:
        cfg.window_reset = args.window_reset == "on"
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    if getattr(args, "pattern", None) is not None:
        try:
            cfg.pattern = cfg.pattern.with_(kind=args.pattern)
        except PatternError as exc:
            raise ConfigError(f"--pattern: {exc}") from None
    cfg.validate()
    return cfg


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


def _summary_path(path: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_summary{p.suffix or '.csv'}")


def _progress(enabled: bool):
    if not enabled:
        return None

    def show(rep):
        print(f"{rep.algorithm} {rep.pattern} n={rep.n_rows} c={rep.counters} seed={rep.seed} "
              f"max={rep.max_disturbance}", file=sys.stderr)
    return show


# -- commands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load(args)
    pattern = cfg.pattern
    if args.n_rows is not None:
        pattern = pattern.with_(n_rows=args.n_rows)
    counters = [args.counters] if args.counters is not None else [None]
    reports = sweep(cfg.timing, pattern, [pattern.n_rows], counters, cfg.seeds, cfg.trackers,
                    windows=cfg.windows, window_reset=cfg.window_reset,
                    progress=_progress(args.progress))
    fh, close = _open_out(cfg.out)
    try:
        write_csv(reports, fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    n_rows = (parse_int_list(args.n_rows, "--n-rows") if args.n_rows is not None
              else cfg.sweep_n_rows or [cfg.pattern.n_rows])
    counters = (parse_int_list(args.counters, "--counters") if args.counters is not None
                else cfg.sweep_counters or [None])
    kinds = (args.patterns.split(",") if args.patterns is not None
             else cfg.sweep_patterns or [cfg.pattern.kind])
    if any(n < 1 for n in n_rows) or any(c is not None and c < 1 for c in counters):
        raise ConfigError("sweep axes must be >= 1")
    reports = []
    for kind in kinds:
        try:
            pattern = cfg.pattern.with_(kind=kind.strip())
        except PatternError as exc:
            raise ConfigError(f"--patterns: {exc}") from None
        reports.extend(sweep(cfg.timing, pattern, n_rows, counters, cfg.seeds, cfg.trackers,
                             windows=cfg.windows, window_reset=cfg.window_reset,
                             progress=_progress(args.progress)))
    reports.sort(key=lambda r: r.key())
    if cfg.out is None or cfg.out == "-":
        write_csv(reports, sys.stdout)
        sys.stdout.write("\n")
        write_summary_csv(reports, sys.stdout)
        return EXIT_OK
    fh, _ = _open_out(cfg.out)
    with fh:
        write_csv(reports, fh)
    with open(_summary_path(cfg.out), "w", newline="") as fh:
        write_summary_csv(reports, fh)
    return EXIT_OK


def cmd_dump_trace(args) -> int:
    cfg = _load(args)
    pattern = cfg.pattern
    if args.n_rows is not None:
        pattern = pattern.with_(n_rows=args.n_rows)
    pattern = pattern.with_(seed=cfg.seeds[0])
    stream = generate(pattern, cfg.timing, windows=cfg.windows)
    fh, close = _open_out(cfg.out)
    try:
        write_trace(stream, fh, header=not args.no_header)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _params(args, timing) -> analysis.AnalysisParams:
    rh = args.rh if args.rh is not None else timing.rh_threshold
    return analysis.AnalysisParams(c=args.counters, rh_threshold=rh, mpa_refi=args.mpa)


def _pf_record(p: analysis.AnalysisParams) -> dict:
    ln_pf = analysis.log_p_consecutive_filter(p)
    return {
        "min_count_bound": analysis.min_count_upper_bound(p),
        "p_replace": analysis.replacement_probability_bound(p),
        "p_f": math.exp(ln_pf),
        "ln_p_f": ln_pf,
        "log10_p_f": ln_pf / math.log(10),
    }


def _parse_weight_pairs(text: str) -> list:
    pairs = []
    for part in text.split(","):
        try:
            cx, o = part.split(":")
            pairs.append((float(cx), float(o)))
        except ValueError:
            raise ConfigError(f"--weights: expected count:share pairs, got {part!r}") from None
    return pairs


def cmd_analyze(args) -> int:
    timing = _load(args).timing if (args.config or args.preset) else ExperimentConfig().timing
    inputs = {k: v for k, v in vars(args).items()
              if k not in ("func", "command", "what", "config", "preset") and v is not None}
    record = {"analysis": args.what, "inputs": inputs}
    if args.what == "pf":
        p = _params(args, timing)
        inputs.update(rh=p.rh_threshold, counters=p.c, mpa=p.mpa_refi)
        record.update(_pf_record(p))
        if args.weights:
            ln_g = analysis.log_p_filter_general(_parse_weight_pairs(args.weights), p)
            record.update(p_f_general=math.exp(ln_g), ln_p_f_general=ln_g,
                          log10_p_f_general=ln_g / math.log(10))
    elif args.what == "reliability":
        p = _params(args, timing)
        inputs.update(rh=p.rh_threshold, counters=p.c, mpa=p.mpa_refi)
        lam = args.lam if args.lam is not None else analysis.p_consecutive_filter(p)
        if not lam > 0:
            raise ConfigError("lambda underflows to zero; pass --lambda explicitly")
        life = analysis.lifetime_for(args.target, lam)
        record.update(lambda_per_second=lam, lifetime_seconds=life,
                      lifetime_days=life / analysis.SECONDS_PER_DAY)
        if args.time is not None:
            record["reliability_at_time"] = analysis.reliability(args.time, lam)
    elif args.what == "counters":
        n = analysis.required_counters(args.algorithm, timing, levels=args.levels,
                                       roots=args.roots, rh_threshold=args.rh)
        inputs["rh"] = args.rh or timing.rh_threshold
        record["required_counters"] = n
    elif args.what == "bounds":
        p = _params(args, timing)
        inputs.update(rh=p.rh_threshold, counters=p.c, mpa=p.mpa_refi)
        record.update(
            mpa_per_refi=mpa_per_refi(timing),
            mpa_per_refw=mpa_per_refw(timing),
            twice_bound=analysis.twice_bound(timing),
            cat_two=analysis.cat_two_coefficients(timing),
            graphene_counters=analysis.required_counters("graphene", timing),
            space_saving_error_bound=analysis.error_bound_space_saving(mpa_per_refw(timing), p.c),
            **_pf_record(p),
        )
    elif args.what == "worst-pattern":
        families = tuple(f.strip() for f in args.families.split(";") if f.strip())
        seeds = parse_int_list(args.seeds, "--seeds")
        res = analysis.worst_pattern_experiment(
            timing, c=args.counters, families=families, seeds=seeds, n_rows=args.n_rows,
            windows=args.windows, window_reset=args.window_reset == "on")
        record.update(res)
    json.dump(record, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--preset", choices=PRESETS, help="bundled experiment preset")


def _run_flags(p: argparse.ArgumentParser) -> None:
    _config_flags(p)
    p.add_argument("--seed", help="seed list, e.g. 0 or 0-4 (overrides run.seeds)")
    p.add_argument("--out", help="output path ('-' for stdout)")
    p.add_argument("--windows", type=int, help="refresh windows to simulate")
    p.add_argument("--window-reset", choices=("on", "off"),
                   help="clear disturbance counts at each window boundary")
    p.add_argument("--pattern", help="override pattern.kind")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsacsim",
                                     description="Rowhammer TRR tracker simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run every tracker on the configured pattern")
    _run_flags(p)
    p.add_argument("--n-rows", type=int, help="override pattern.n_rows")
    p.add_argument("--counters", type=int, help="override every tracker's capacity")
    p.add_argument("--progress", action="store_true", help="log each run to stderr")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="cross product of n_rows x counters x seeds x trackers")
    _run_flags(p)
    p.add_argument("--n-rows", help="n_rows axis, e.g. 1-255")
    p.add_argument("--counters", help="counters axis, e.g. 8-20")
    p.add_argument("--patterns", help="comma list of pattern kinds")
    p.add_argument("--progress", action="store_true", help="log each run to stderr")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-trace", help="write the configured pattern as a trace file")
    _run_flags(p)
    p.add_argument("--n-rows", type=int, help="override pattern.n_rows")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_dump_trace)

    p = sub.add_parser("analyze", help="closed-form security calculators (JSON)")
    asub = p.add_subparsers(dest="what", required=True)
    for name in ("pf", "reliability", "bounds"):
        q = asub.add_parser(name)
        _config_flags(q)
        q.add_argument("--counters", type=int, default=20)
        q.add_argument("--rh", type=int, help="Rowhammer threshold (default from timing)")
        q.add_argument("--mpa", type=int, default=256, help="MPA term subtracted from RH/2")
        if name == "pf":
            q.add_argument("--weights", help="count:share pairs, e.g. 1:0.5,2:0.25")
        if name == "reliability":
            q.add_argument("--target", type=float, default=0.999)
            q.add_argument("--lambda", dest="lam", type=float,
                           help="failure rate per second (default P(f))")
            q.add_argument("--time", type=float, help="also report R(t) at t seconds")
        q.set_defaults(func=cmd_analyze)
    q = asub.add_parser("counters")
    _config_flags(q)
    q.add_argument("algorithm", choices=("graphene", "cat_two", "twice"))
    q.add_argument("--rh", type=int)
    q.add_argument("--levels", type=int, default=1)
    q.add_argument("--roots", type=int, default=0)
    q.set_defaults(func=cmd_analyze)
    q = asub.add_parser("worst-pattern")
    _config_flags(q)
    q.add_argument("--counters", type=int, default=20)
    q.add_argument("--families", default=";".join(analysis.DEFAULT_FAMILIES),
                   help="';'-separated weight families")
    q.add_argument("--seeds", default="0-9")
    q.add_argument("--n-rows", type=int, default=100)
    q.add_argument("--windows", type=int, default=1)
    q.add_argument("--window-reset", choices=("on", "off"), default="on")
    q.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PatternError, TraceError, ValueError) as exc:
        print(f"dsacsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"dsacsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
