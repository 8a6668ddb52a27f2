import json
from pathlib import Path

import pytest

from dsacsim.cli import main
from dsacsim.config import PRESETS, load_config, load_preset, parse_config, parse_int_list
from dsacsim.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
pytestmark = pytest.mark.filterwarnings("ignore::dsacsim.errors.RefreshBudgetWarning")

TINY = """
[timing]
refresh_cmds_per_window = 16
rh_threshold = 2000
[pattern]
kind = random
n_rows = 12
[run]
trackers = dsac, graphene
windows = 2
seeds = 0-1
[tracker.dsac]
capacity = 6
[tracker.graphene]
algorithm = graphene
capacity = 6
"""


def test_int_lists():
    assert parse_int_list("1-3, 7, 10-20:5", "x") == [1, 2, 3, 7, 10, 15, 20]
    for bad in ("5-1", "a", "1-2:0"):
        with pytest.raises(ConfigError):
            parse_int_list(bad, "x")


def test_example_config_parses():
    cfg = load_config(ROOT / "configs" / "example.ini")
    assert cfg.timing.refresh_cmds_per_window == 8192
    assert cfg.windows == 4 and cfg.seeds == [0, 1, 2, 3, 4]
    assert {t.name for t in cfg.trackers} >= {"dsac", "graphene"}


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse(name):
    cfg = load_preset(name)
    assert cfg.trackers and cfg.sweep_n_rows


@pytest.mark.parametrize("text,field", [
    ("[run]\ntrackers = foo\n", "run.trackers"),
    ("[tracker.x]\nalgorithm = nope\n", "tracker.x.algorithm"),
    ("[tracker.dsac]\ncapacity = many\n", "tracker.dsac.capacity"),
    ("[tracker.dsac]\nbogus = 1\n", "bogus"),
    ("[timing]\ntRFC_ns = abc\n", "timing.tRFC_ns"),
    ("[pattern]\nkind = nope\n", "pattern"),
    ("[run]\nwindows = 0\n", "run.windows"),
    ("[sweep]\ncounters = 0\n", "sweep.counters"),
    ("[other]\n", "other"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(text)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\ntrackers = foo\n")
    code, _, err = run_cli(capsys, "simulate", "--config", str(bad))
    assert code == 2 and "run.trackers" in err
    code, _, err = run_cli(capsys, "simulate", "--config", str(tmp_path / "missing.ini"))
    assert code == 3 and "I/O" in err
    code, _, _ = run_cli(capsys, "simulate", "--config", str(bad), "--preset", "table6")
    assert code == 2


def test_simulate_equals_single_point_sweep(tmp_path, capsys):
    cfg = tmp_path / "t.ini"
    cfg.write_text(TINY)
    code, sim, _ = run_cli(capsys, "simulate", "--config", str(cfg))
    assert code == 0
    a = tmp_path / "a.csv"
    assert main(["sweep", "--config", str(cfg), "--n-rows", "12", "--out", str(a)]) == 0
    assert a.read_text() == sim
    summary = (tmp_path / "a_summary.csv").read_text().splitlines()
    assert summary[0] == "algo,pattern,counters,stat,value" and len(summary) == 5


def test_sweep_stdout_has_summary_block(tmp_path, capsys):
    cfg = tmp_path / "t.ini"
    cfg.write_text(TINY)
    code, out, _ = run_cli(capsys, "sweep", "--config", str(cfg), "--n-rows", "2,4",
                           "--patterns", "trrespass,random")
    assert code == 0
    runs, summary = out.split("\n\n")
    assert len(runs.splitlines()) == 1 + 2 * 2 * 2 * 2 * 2  # pattern, n, seed, tracker, window
    assert len(summary.strip().splitlines()) == 1 + 2 * 2 * 2


def test_dump_trace_round_trip(tmp_path, capsys):
    cfg = tmp_path / "t.ini"
    cfg.write_text(TINY)
    path = tmp_path / "trace.csv"
    assert main(["dump-trace", "--config", str(cfg), "--windows", "1", "--out", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 16 * 255


@pytest.mark.parametrize("preset", ["fig17-desk", "table6-desk"])
def test_preset_csv_is_deterministic(tmp_path, capsys, preset):
    outs = []
    for i in range(2):
        p = tmp_path / f"{i}.csv"
        assert main(["sweep", "--preset", preset, "--n-rows", "1,50", "--out", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_analyze_pf(capsys):
    code, out, _ = run_cli(capsys, "analyze", "pf", "--counters", "20")
    rec = json.loads(out)
    assert code == 0 and rec["analysis"] == "pf"
    assert rec["min_count_bound"] == pytest.approx(487.2)
    assert rec["log10_p_f"] == pytest.approx(-8.905, abs=1e-3)
    code, out, _ = run_cli(capsys, "analyze", "pf", "--counters", "418", "--weights", "1:1")
    rec = json.loads(out)
    assert rec["log10_p_f"] == pytest.approx(-182.419, abs=1e-3)
    assert rec["log10_p_f_general"] == pytest.approx(rec["log10_p_f"])


def test_analyze_reliability_and_counters(capsys):
    rec = json.loads(run_cli(capsys, "analyze", "reliability", "--lambda", "1.245e-9")[1])
    assert rec["lifetime_days"] == pytest.approx(9.3011, abs=1e-3)
    rec = json.loads(run_cli(capsys, "analyze", "counters", "graphene")[1])
    assert rec["required_counters"] == 418
    rec = json.loads(run_cli(capsys, "analyze", "counters", "cat_two", "--levels", "2")[1])
    assert rec["required_counters"] == 210
    rec = json.loads(run_cli(capsys, "analyze", "bounds")[1])
    assert rec["mpa_per_refi"] == 255 and rec["graphene_counters"] == 418


def test_analyze_bad_weights(capsys):
    code, _, err = run_cli(capsys, "analyze", "pf", "--weights", "1:0.3")
    assert code == 2 and "sum" in err


def test_analyze_worst_pattern(capsys):
    code, out, _ = run_cli(capsys, "analyze", "worst-pattern", "--families", "uniform;zipf:2",
                           "--seeds", "0-1", "--n-rows", "20", "--counters", "8")
    rec = json.loads(out)
    assert code == 0 and set(rec["families"]) == {"uniform", "zipf:2"}
