from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from dsacsim.errors import ConfigError
from dsacsim.timing import (TABLE1, TimingConfig, effective_intervals, mpa_per_refi, mpa_per_refw,
                            refresh_work_budget, required_refresh_budget)


def test_effective_intervals_table1():
    refie, refwe = effective_intervals(TABLE1)
    assert refie == 15625
    assert refwe == 128_000_000


def test_effective_intervals_mr4_1x():
    refie, refwe = effective_intervals(TABLE1.replace(mr4_multiplier=1))
    assert refie == Fraction(15625, 4)
    assert refwe == 32_000_000


def test_identity_multiplier():
    cfg = TimingConfig(tREFI_ns=1234, mr4_multiplier=1, tRFC_ns=100)
    assert effective_intervals(cfg)[0] == 1234


@pytest.mark.parametrize("mult", [3, Fraction(1, 4), 8])
def test_invalid_multiplier(mult):
    with pytest.raises(ConfigError):
        TimingConfig(mr4_multiplier=mult)


def test_mpa_per_refi_table1():
    assert mpa_per_refi(TABLE1) == 255


def test_mpa_per_refi_one_slot():
    cfg = TimingConfig(tREFI_ns=340, mr4_multiplier=1, tRFC_ns=280, tRCmin_ns=60)
    assert mpa_per_refi(cfg) == 1
    assert mpa_per_refw(cfg) == 8192


def test_mpa_per_refi_hand_example():
    cfg = TimingConfig(tREFI_ns=1000, mr4_multiplier=1, tRFC_ns=100, tRCmin_ns=70)
    assert mpa_per_refi(cfg) == 12


def test_mpa_per_refw_table1():
    assert mpa_per_refw(TABLE1) == 2_095_104


def test_mpa_per_refw_mr4_1x():
    # (3906.25 - 280) / 60 * 8192, floored once
    assert mpa_per_refw(TABLE1.replace(mr4_multiplier=1)) == 495_104


def test_refresh_not_shorter_than_interval():
    with pytest.raises(ConfigError):
        mpa_per_refi(TimingConfig(tREFI_ns=280, mr4_multiplier=1, tRFC_ns=280))


@pytest.mark.parametrize("kw", [dict(rh_threshold=1), dict(rows_per_bank=1),
                                dict(tRCmin_ns=0), dict(refresh_cmds_per_window=0)])
def test_field_invariants(kw):
    with pytest.raises(ConfigError):
        TimingConfig(**kw)


def test_refresh_work_budget():
    assert refresh_work_budget(TABLE1) == 4
    assert required_refresh_budget(1) == 3
    assert refresh_work_budget(TABLE1.replace(tRFC_ns=100)) == 1


timing_cfgs = st.builds(
    TimingConfig,
    tREFI_ns=st.fractions(min_value=500, max_value=10000, max_denominator=16),
    mr4_multiplier=st.sampled_from([Fraction(1, 2), 1, 2, 4]),
    tRFC_ns=st.integers(0, 240),
    tRCmin_ns=st.integers(20, 80),
    refresh_cmds_per_window=st.integers(1, 9000),
)


@given(timing_cfgs)
def test_window_floor_dominates_interval_floor(cfg):
    assert mpa_per_refw(cfg) >= cfg.refresh_cmds_per_window * mpa_per_refi(cfg)


@given(timing_cfgs.filter(lambda c: c.mr4_multiplier <= 2))
def test_doubling_multiplier_at_least_doubles_window_budget(cfg):
    doubled = cfg.replace(mr4_multiplier=cfg.mr4_multiplier * 2)
    assert mpa_per_refw(doubled) >= 2 * mpa_per_refw(cfg)


@given(timing_cfgs)
def test_accumulated_intervals_exact(cfg):
    refie, refwe = effective_intervals(cfg)
    total = Fraction(0)
    for _ in range(cfg.refresh_cmds_per_window):
        total += refie
    assert total == refwe
