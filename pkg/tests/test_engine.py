import warnings

import numpy as np
import pytest

from dsacsim.engine import (CSV_COLUMNS, TrackerSpec, bitflip_threshold, build_tracker,
                            check_refresh_budget, max_by_n_rows, reports_to_csv, run_reference,
                            run_simulation, summarize, sweep)
from dsacsim.errors import ConfigError, RefreshBudgetWarning
from dsacsim.patterns import PatternSpec, generate
from dsacsim.timing import TABLE1, mpa_per_refi

DESK = TABLE1.replace(refresh_cmds_per_window=32, rh_threshold=2000, rows_per_bank=8192)
SMALL = dict(para_probability=0.05, mrloc_probability_scale=0.2)
ALL = ["dsac", "space_saving", "graphene", "twice", "para", "prohit", "mrloc", "oracle", "none"]

pytestmark = pytest.mark.filterwarnings("ignore::dsacsim.errors.RefreshBudgetWarning")


def tracker(name, seed=0, counters=4, cfg=DESK):
    opts = {k: v for k, v in SMALL.items() if k.startswith(name[:4])}
    return build_tracker(name, cfg, seed=seed, counters=counters, **opts)


def test_no_mitigation_single_row():
    rep = run_simulation(DESK, PatternSpec("trrespass", n_rows=1), tracker("none"), windows=1)
    assert rep.max_disturbance == 32 * mpa_per_refi(DESK)
    assert rep.trr_count == 0


def test_no_mitigation_accumulates_without_window_reset():
    rep = run_simulation(DESK, PatternSpec("trrespass", n_rows=1), tracker("none"), windows=2,
                         window_reset=False)
    assert rep.window_max == [8160, 16320]


@pytest.mark.parametrize("n", [1, 2, 10, 50, 255])
def test_exact_oracle_keeps_disturbance_near_one_interval(n):
    rep = run_simulation(DESK, PatternSpec("trrespass", n_rows=n), tracker("oracle"), windows=2)
    assert rep.max_disturbance <= 2 * mpa_per_refi(DESK)


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("kind", ["trrespass", "random", "decoy_flood"])
def test_compiled_loop_matches_reference(name, kind):
    spec = PatternSpec(kind, n_rows=9, seed=2)
    a = run_simulation(DESK, spec, tracker(name, seed=5), windows=2, seed=5)
    b = run_reference(DESK, spec, tracker(name, seed=5), windows=2, seed=5)
    assert a.window_max == b.window_max
    assert a.window_trr == b.window_trr
    assert a.window_avg == pytest.approx(b.window_avg)


def test_conservation_without_mitigation():
    seen = {}

    def probe(t, w, cmd, ledger):
        seen[cmd] = int(ledger.counts.sum())

    spec = PatternSpec("random", n_rows=17, seed=1)
    run_reference(DESK, spec, tracker("none"), windows=1, probe=probe)
    for cmd, total in seen.items():
        assert total == (cmd + 1) * mpa_per_refi(DESK)


@pytest.mark.parametrize("name", ALL)
def test_mitigation_never_raises_end_of_window_counts(name):
    def final_counts(t):
        out = {}

        def probe(tr, w, cmd, ledger):
            if cmd == DESK.refresh_cmds_per_window - 1:
                out["c"] = ledger.counts.copy()

        run_reference(DESK, PatternSpec("random", n_rows=30, seed=3), t, probe=probe)
        return out["c"]

    base = final_counts(tracker("none"))
    assert np.all(final_counts(tracker(name, seed=1)) <= base)


def test_report_determinism():
    spec = PatternSpec("random", n_rows=40, seed=8)
    a = run_simulation(DESK, spec, tracker("dsac", seed=8), windows=2, seed=8)
    b = run_simulation(DESK, spec, tracker("dsac", seed=8), windows=2, seed=8)
    assert reports_to_csv([a]) == reports_to_csv([b])


def test_csv_schema():
    rep = run_simulation(DESK, PatternSpec("trrespass", n_rows=3), tracker("dsac"), windows=2)
    lines = reports_to_csv([rep]).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert lines[1].startswith("dsac,trrespass,3,4,0,0,")


def test_bitflip_thresholds():
    assert bitflip_threshold(TABLE1, "double") == 10000
    assert bitflip_threshold(TABLE1, "single") == 20000
    rep = run_simulation(DESK, PatternSpec("trrespass", n_rows=1), tracker("none"), windows=1)
    assert rep.bitflip


def test_refresh_budget_checks():
    with pytest.warns(RefreshBudgetWarning):
        assert not check_refresh_budget(TABLE1, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_refresh_budget(TABLE1, 1)
    with pytest.warns(RefreshBudgetWarning):
        check_refresh_budget(TABLE1.replace(tRFC_ns=100), 1)


def test_simulation_errors():
    spec = PatternSpec("trrespass", n_rows=2)
    with pytest.raises(ConfigError):
        run_simulation(DESK, spec, tracker("dsac"), windows=0)
    with pytest.raises(ConfigError):
        run_simulation(DESK, spec, build_tracker("dsac", TABLE1), windows=1)
    with pytest.raises(ConfigError):
        build_tracker("nope", DESK)
    with pytest.raises(ConfigError):
        build_tracker("graphene", DESK, bogus=1)


def test_single_point_sweep_equals_simulation():
    ts = [TrackerSpec("dsac", "dsac"), TrackerSpec("g", "graphene")]
    spec = PatternSpec("random", n_rows=12)
    reps = sweep(DESK, spec, [12], [6], [0, 1], ts, windows=2)
    assert len(reps) == 4
    for r in reps:
        algo = "graphene" if r.algorithm == "g" else "dsac"
        one = run_simulation(DESK, spec.with_(seed=r.seed),
                             build_tracker(algo, DESK, seed=r.seed, counters=6),
                             windows=2, seed=r.seed, algorithm=r.algorithm)
        assert reports_to_csv([r]) == reports_to_csv([one])


def test_sweep_reuses_deterministic_runs():
    ts = [TrackerSpec("graphene", "graphene")]
    reps = sweep(DESK, PatternSpec("trrespass"), [5], [4], [0, 1, 2], ts, windows=1)
    assert len({tuple(r.window_max) for r in reps}) == 1
    assert [r.seed for r in reps] == [0, 1, 2]


def test_summary_shape_and_order():
    ts = [TrackerSpec("dsac", "dsac"), TrackerSpec("graphene", "graphene")]
    reps = sweep(DESK, PatternSpec("trrespass"), [1, 5, 20, 40], [20], [0], ts, windows=1)
    summary = summarize(reps)
    assert [(s["algo"], s["stat"]) for s in summary] == [
        ("dsac", "Average"), ("dsac", "Maximum"), ("graphene", "Average"),
        ("graphene", "Maximum")]
    for avg, mx in zip(summary[::2], summary[1::2]):
        assert float(avg["value"]) <= float(mx["value"])
    by_n = max_by_n_rows(reps, "dsac", "trrespass")
    assert list(by_n) == [1, 5, 20, 40]
    assert float(summary[1]["value"]) == max(by_n.values())


def test_counters_axis_groups_summary():
    ts = [TrackerSpec("dsac", "dsac")]
    reps = sweep(DESK, PatternSpec("trrespass"), [3, 30], [8, 12], [0], ts, windows=1)
    assert sorted({s["counters"] for s in summarize(reps)}) == [8, 12]


def test_sweep_rejects_empty_axes():
    with pytest.raises(ConfigError):
        sweep(DESK, PatternSpec(), [], [4], [0], [TrackerSpec("dsac", "dsac")])


def test_dsac_average_below_graphene_average_desk():
    ts = [TrackerSpec("dsac", "dsac"), TrackerSpec("graphene", "graphene")]
    cfg = TABLE1.replace(refresh_cmds_per_window=512, rh_threshold=2000)
    reps = sweep(cfg, PatternSpec("trrespass"), range(1, 256, 16), [20], [0], ts, windows=2)
    avg = {s["algo"]: float(s["value"]) for s in summarize(reps) if s["stat"] == "Average"}
    assert avg["dsac"] < avg["graphene"]


def test_external_trace_stream(tmp_path):
    from dsacsim.patterns import dump_trace

    s = generate(PatternSpec("random", n_rows=6, seed=2), DESK, windows=2)
    dump_trace(s, tmp_path / "t.csv")
    spec = PatternSpec("trace", n_rows=6, trace_path=str(tmp_path / "t.csv"))
    a = run_simulation(DESK, spec, tracker("dsac"), windows=2)
    b = run_reference(DESK, PatternSpec("random", n_rows=6, seed=2), tracker("dsac"), windows=2)
    assert a.window_max == b.window_max
