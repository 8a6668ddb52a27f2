"""Refresh/activation timing and maximum-possible-activation arithmetic.

All durations are exact rationals in nanoseconds (``fractions.Fraction``), so
8192 accumulated refresh intervals add up to the window length with no drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ConfigError

ALLOWED_MR4 = (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(4))


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # go through repr so 3906.25 stays exact and 0.1 means one tenth
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class TimingConfig:
    tREFI_ns: Fraction = field(default=Fraction(15625, 4))  # 32 ms / 8192
    mr4_multiplier: Fraction = Fraction(4)
    tRFC_ns: Fraction = Fraction(280)
    tRCmin_ns: Fraction = Fraction(60)
    tRASmin_ns: Fraction = Fraction(42)
    refresh_cmds_per_window: int = 8192
    rows_per_bank: int = 65536
    rh_threshold: int = 20000

    def __post_init__(self):
        for name in ("tREFI_ns", "mr4_multiplier", "tRFC_ns", "tRCmin_ns", "tRASmin_ns"):
            try:
                object.__setattr__(self, name, _frac(getattr(self, name)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: not a number ({getattr(self, name)!r})") from exc
        if self.mr4_multiplier not in ALLOWED_MR4:
            raise ConfigError(
                f"mr4_multiplier must be one of 0.5, 1, 2, 4 (got {self.mr4_multiplier})"
            )
        if self.tREFI_ns <= 0 or self.tRCmin_ns <= 0 or self.tRASmin_ns <= 0 or self.tRFC_ns < 0:
            raise ConfigError("timing durations must be positive")
        if self.rh_threshold < 2:
            raise ConfigError("rh_threshold must be >= 2")
        if self.rows_per_bank < 2:
            raise ConfigError("rows_per_bank must be >= 2")
        if self.refresh_cmds_per_window < 1:
            raise ConfigError("refresh_cmds_per_window must be >= 1")

    @property
    def tREFIe_ns(self) -> Fraction:
        return self.mr4_multiplier * self.tREFI_ns

    @property
    def tREFWe_ns(self) -> Fraction:
        return self.refresh_cmds_per_window * self.tREFIe_ns

    def validate(self) -> None:
        """Raise ConfigError unless an interval leaves room after refresh."""
        if self.tREFIe_ns <= self.tRFC_ns:
            raise ConfigError(
                f"tREFIe ({self.tREFIe_ns} ns) must exceed tRFC ({self.tRFC_ns} ns)"
            )

    def replace(self, **changes) -> "TimingConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return TimingConfig(**values)

    def describe(self) -> dict:
        return {
            "tREFI_ns": str(self.tREFI_ns),
            "mr4_multiplier": str(self.mr4_multiplier),
            "tREFIe_ns": str(self.tREFIe_ns),
            "tREFWe_ns": str(self.tREFWe_ns),
            "tRFC_ns": str(self.tRFC_ns),
            "tRCmin_ns": str(self.tRCmin_ns),
            "tRASmin_ns": str(self.tRASmin_ns),
            "refresh_cmds_per_window": self.refresh_cmds_per_window,
            "rows_per_bank": self.rows_per_bank,
            "rh_threshold": self.rh_threshold,
        }


TABLE1 = TimingConfig()


def effective_intervals(cfg: TimingConfig) -> tuple[Fraction, Fraction]:
    """Return (tREFIe, tREFWe) in ns under the configured MR4 multiplier."""
    if cfg.mr4_multiplier not in ALLOWED_MR4:
        raise ConfigError(f"mr4_multiplier {cfg.mr4_multiplier} not allowed")
    return cfg.tREFIe_ns, cfg.tREFWe_ns


def mpa_per_refi(cfg: TimingConfig) -> int:
    """Activations that fit between two refresh commands (floored per interval)."""
    cfg.validate()
    return math.floor((cfg.tREFIe_ns - cfg.tRFC_ns) / cfg.tRCmin_ns)


def mpa_per_refw(cfg: TimingConfig) -> int:
    """Activations per window, floored once over the whole window.

    This is larger than ``refresh_cmds_per_window * mpa_per_refi(cfg)`` when
    the per-interval quotient has a fractional part (255.75 for the default timing).
    """
    cfg.validate()
    return math.floor((cfg.tREFIe_ns - cfg.tRFC_ns) / cfg.tRCmin_ns * cfg.refresh_cmds_per_window)


def refresh_work_budget(cfg: TimingConfig) -> int:
    """Row activations that fit inside one refresh operation, floor(tRFC/tRCmin)."""
    return math.floor(cfg.tRFC_ns / cfg.tRCmin_ns)


def required_refresh_budget(blast_radius: int) -> int:
    # one normal-refresh slot plus both sides of the blast radius
    return 1 + 2 * blast_radius
