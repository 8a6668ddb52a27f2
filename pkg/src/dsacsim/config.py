"""INI experiment configuration.

Sections::

    [timing]          TimingConfig fields
    [pattern]         PatternSpec fields
    [run]             trackers, windows, seeds, out, window_reset
    [tracker.<name>]  algorithm = <dsac|graphene|...> plus that algorithm's options
    [sweep]           n_rows, counters, patterns (all optional)

Integer lists accept comma lists and inclusive ranges: ``1-20, 50, 100-255:5``.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
import typing
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

from .baselines import BaselineConfig
from .dsac import DsacConfig
from .engine import ALGORITHMS, TrackerSpec
from .errors import ConfigError, PatternError
from .patterns import PatternSpec
from .timing import TimingConfig

PRESETS = ("table6", "table6-desk", "table7", "table7-desk", "fig17", "fig17-desk")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ConfigError(f"{where}: expected on/off, got {text!r}")


_RANGE = re.compile(r"^(\d+)\s*-\s*(\d+)(?:\s*:\s*(\d+))?$")


def parse_int_list(text: str, where: str) -> list[int]:
    out = []
    for part in text.replace("\n", ",").split(","):
        part = part.strip()
        if not part:
            continue
        m = _RANGE.match(part)
        if m:
            lo, hi, step = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
            if step < 1 or hi < lo:
                raise ConfigError(f"{where}: empty range {part!r}")
            out.extend(range(lo, hi + 1, step))
            continue
        try:
            out.append(int(part))
        except ValueError:
            raise ConfigError(f"{where}: cannot parse {part!r} as an integer or range") from None
    return out


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _coerce(value: str, annotation, where: str):
    """Convert an INI string to a dataclass field's declared type."""
    ann = annotation
    origin = typing.get_origin(ann)
    args = typing.get_args(ann)
    if origin is typing.Union and type(None) in args:
        if value.strip() == "" or value.strip().lower() == "none":
            return None
        ann = next(a for a in args if a is not type(None))
    try:
        if ann is bool:
            return parse_bool(value, where)
        if ann is int:
            return int(value)
        if ann is float:
            return float(value)
        return value.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r}") from None


def _options_for(cls, section, where: str, skip=()) -> dict:
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, value in section.items():
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"{where}: unknown option {key!r}")
        out[key] = _coerce(value, hints[key], f"{where}.{key}")
    return out


def _timing(section) -> TimingConfig:
    kw = {}
    names = {f.name.lower(): f.name for f in dataclasses.fields(TimingConfig)}
    for key, value in section.items():
        if key.lower() not in names:
            raise ConfigError(f"timing: unknown option {key!r}")
        name = names[key.lower()]
        if name in ("refresh_cmds_per_window", "rows_per_bank", "rh_threshold"):
            kw[name] = _coerce(value, int, f"timing.{key}")
        else:
            try:
                kw[name] = Fraction(value.strip())
            except ValueError:
                raise ConfigError(f"timing.{key}: cannot parse {value!r}") from None
    cfg = TimingConfig(**kw)
    cfg.validate()
    return cfg


def _pattern(section) -> PatternSpec:
    kw = {}
    for key, value in section.items():
        where = f"pattern.{key}"
        if key in ("kind", "side", "trace_path"):
            kw[key] = value.strip() or None
        elif key in ("n_rows", "base_row", "seed", "blast_radius", "decoy_ratio"):
            kw[key] = _coerce(value, int, where)
        elif key == "burst_length":
            kw[key] = _coerce(value, Optional[int], where)
        elif key == "weights":
            v = value.strip()
            if "," in v:
                try:
                    kw[key] = tuple(float(x) for x in v.split(","))
                except ValueError:
                    raise ConfigError(f"{where}: malformed weights {v!r}") from None
            else:
                kw[key] = v
        elif key == "tras_ns":
            v = value.strip()
            if not v:
                kw[key] = None
            else:
                try:
                    vals = tuple(float(x) for x in v.split(","))
                except ValueError:
                    raise ConfigError(f"{where}: cannot parse {v!r}") from None
                kw[key] = vals if len(vals) > 1 else vals[0]
        else:
            raise ConfigError(f"pattern: unknown option {key!r}")
    try:
        return PatternSpec(**kw)
    except PatternError as exc:
        raise ConfigError(f"pattern: {exc}") from None


def _tracker(name: str, section) -> TrackerSpec:
    where = f"tracker.{name}"
    algorithm = (section.get("algorithm") if section is not None else None) or name
    algorithm = algorithm.strip()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"{where}.algorithm: unknown algorithm {algorithm!r}")
    options = {}
    if section is not None:
        if algorithm in ("dsac", "space_saving"):
            options = _options_for(DsacConfig, section, where, skip=("algorithm",))
        elif algorithm in ("oracle", "none"):
            for key in section:
                if key not in ("algorithm", "blast_radius"):
                    raise ConfigError(f"{where}: unknown option {key!r}")
            if "blast_radius" in section:
                options["blast_radius"] = _coerce(section["blast_radius"], int,
                                                  f"{where}.blast_radius")
        else:
            options = _options_for(BaselineConfig, section, where, skip=("algorithm",))
            options.pop("algorithm", None)
    try:
        # validate eagerly so errors name the section
        if algorithm in ("dsac", "space_saving"):
            DsacConfig(**options)
        elif algorithm not in ("oracle", "none"):
            BaselineConfig(algorithm=algorithm, **options)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return TrackerSpec(name, algorithm, tuple(sorted(options.items())))


@dataclass
class ExperimentConfig:
    timing: TimingConfig = field(default_factory=TimingConfig)
    pattern: PatternSpec = field(default_factory=PatternSpec)
    trackers: list = field(default_factory=lambda: [TrackerSpec("dsac", "dsac")])
    windows: int = 4
    seeds: list = field(default_factory=lambda: [0])
    out: Optional[str] = None
    window_reset: bool = True
    sweep_n_rows: Optional[list] = None
    sweep_counters: Optional[list] = None
    sweep_patterns: Optional[list] = None
    source: Optional[str] = None

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("run.seeds: must be nonempty")
        if self.windows < 1:
            raise ConfigError("run.windows: must be >= 1")
        if not self.trackers:
            raise ConfigError("run.trackers: must be nonempty")
        names = [t.name for t in self.trackers]
        if len(set(names)) != len(names):
            raise ConfigError("run.trackers: duplicate tracker names")
        for n in self.sweep_n_rows or []:
            if n < 1:
                raise ConfigError("sweep.n_rows: values must be >= 1")
        for c in self.sweep_counters or []:
            if c < 1:
                raise ConfigError("sweep.counters: values must be >= 1")


def parse_config(text: str, source: Optional[str] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep tREFI_ns etc. as written
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for sec in parser.sections():
        if sec not in ("timing", "pattern", "run", "sweep") and not sec.startswith("tracker."):
            raise ConfigError(f"unknown section [{sec}]")
    cfg = ExperimentConfig(source=source)
    if parser.has_section("timing"):
        cfg.timing = _timing(parser["timing"])
    if parser.has_section("pattern"):
        cfg.pattern = _pattern(parser["pattern"])
    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key not in ("trackers", "windows", "seeds", "out", "window_reset"):
            raise ConfigError(f"run: unknown option {key!r}")
    declared = {s[len("tracker."):]: parser[s] for s in parser.sections() if s.startswith("tracker.")}
    names = _names(run.get("trackers", "")) or list(declared) or ["dsac"]
    trackers = []
    for name in names:
        if name not in declared and name not in ALGORITHMS:
            raise ConfigError(f"run.trackers: unknown tracker {name!r}")
        trackers.append(_tracker(name, declared.get(name)))
    cfg.trackers = trackers
    if "windows" in run:
        cfg.windows = _coerce(run["windows"], int, "run.windows")
    if "seeds" in run:
        cfg.seeds = parse_int_list(run["seeds"], "run.seeds")
    if "out" in run:
        cfg.out = run["out"].strip() or None
    if "window_reset" in run:
        cfg.window_reset = parse_bool(run["window_reset"], "run.window_reset")
    if parser.has_section("sweep"):
        sw = parser["sweep"]
        for key in sw:
            if key not in ("n_rows", "counters", "patterns"):
                raise ConfigError(f"sweep: unknown option {key!r}")
        if "n_rows" in sw:
            cfg.sweep_n_rows = parse_int_list(sw["n_rows"], "sweep.n_rows")
        if "counters" in sw:
            cfg.sweep_counters = parse_int_list(sw["counters"], "sweep.counters")
        if "patterns" in sw:
            cfg.sweep_patterns = _names(sw["patterns"])
            for kind in cfg.sweep_patterns:
                try:
                    cfg.pattern.with_(kind=kind)
                except PatternError as exc:
                    raise ConfigError(f"sweep.patterns: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    """Parse a config file. OSError propagates for the caller to report."""
    text = Path(path).read_text()
    return parse_config(text, str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    return resources.files("dsacsim.presets").joinpath(f"{name}.ini").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), f"preset:{name}")
