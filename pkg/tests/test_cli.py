import json

import pytest

from starqkd.cli import main
from starqkd.scenario_file import load_scenario


def test_plan_four_users(capsys):
    assert main(["plan", "--users", "4", "--grid", "1510,1530,1550"]) == 0
    out = capsys.readouterr().out
    assert "3 wavelength channel(s)" in out
    assert "WDM traversals per path: [2]" in out


def test_plan_two_users(capsys):
    assert main(["plan", "--users", "2"]) == 0
    assert "1 wavelength channel(s)" in capsys.readouterr().out


def test_plan_one_user_fails(capsys):
    assert main(["plan", "--users", "1"]) == 1
    assert "error" in capsys.readouterr().err


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 1


def test_simulate_writes_records_and_transcript(tmp_path, capsys):
    out, tr = tmp_path / "r.jsonl", tmp_path / "t.txt"
    rc = main(["simulate", "beijing", "--mode", "single", "--pulses", "2e5", "--seed", "42",
               "--out", str(out), "--transcript", str(tr)])
    assert rc == 0
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["session_id"] for r in recs[:-1]] == ["A-B", "A-C", "A-D", "D-C"]
    assert recs[-1]["scenario"]["pulse_count"] == 200_000
    clicks = sum(r["clicks"] for r in recs[:-1])
    assert len(tr.read_text().splitlines()) == clicks


def test_simulate_concentration_three_sessions(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["simulate", "beijing", "--mode", "concentration", "--pulses", "1e5",
                 "--out", str(out)]) == 0
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["session_id"] for r in recs[:-1]] == ["A-B", "A-C", "A-D"]


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["simulate", "beijing", "--pulses", "1e5", "--out", str(a)])
    main(["simulate", "beijing", "--pulses", "1e5", "--out", str(b), "--workers", "4"])
    assert a.read_bytes() == b.read_bytes()


def test_malformed_file(tmp_path, capsys):
    p = tmp_path / "bad.scn"
    p.write_text('name = "x"\n[network]\nnodes = ["A", "B"]\ncolour = 1\n')
    assert main(["simulate", str(p)]) == 1
    assert "network.colour: unknown key" in capsys.readouterr().err


def test_bad_pulse_count():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "beijing", "--pulses", "1.5"])
    assert info.value.code == 1


def test_compare(tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert main(["compare", "beijing", "--pulses", "1e5", "--out", str(out)]) == 0
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["record"] for r in recs].count("network") == 2
    assert "QBER single" in capsys.readouterr().out


def test_calibrate_writes_scenario(tmp_path, capsys):
    out = tmp_path / "cal.scn"
    assert main(["calibrate", "beijing", "--measured",
                 "A-B=0.077,A-C=0.041,A-D=0.066,D-C=0.024", "--out", str(out)]) == 0
    s = load_scenario(out)
    assert all(isinstance(lp.excess_error, float) and lp.excess_error > 0
               for lp in s.links.values())


def test_calibrate_infeasible(capsys):
    assert main(["calibrate", "beijing", "--measured", "A-C=0.01"]) == 1
    assert "physics.links.A-C" in capsys.readouterr().err


def test_decoy_outcomes(capsys):
    assert main(["decoy", "beijing", "--link", "A-C", "--signal", "0.6", "--decoy", "0.2",
                 "--rep-rate", "1e6"]) == 0
    assert "(secure key)" in capsys.readouterr().out
    assert main(["decoy", "beijing", "--loss-db", "60"]) == 0
    assert "NO secure key" in capsys.readouterr().out
    assert main(["decoy", "beijing", "--signal", "0.2", "--decoy", "0.6"]) == 1


def test_scenario_dump(capsys):
    assert main(["scenario", "beijing"]) == 0
    assert "[physics.links.A-C]" in capsys.readouterr().out
