import json
import math

import pytest

from starqkd.report import (
    format_table,
    from_records,
    loads_jsonl,
    session_record,
    to_records,
    write_jsonl,
)


def test_jsonl_round_trip_lossless(beijing_runs):
    for rep in beijing_runs:
        lines = "".join(json.dumps(r) + "\n" for r in to_records(rep))
        back = loads_jsonl(lines)
        assert back == rep


def test_record_layout(beijing_runs, tmp_path):
    _, conc = beijing_runs
    p = tmp_path / "r.jsonl"
    with open(p, "w") as fh:
        write_jsonl(conc, fh)
    recs = [json.loads(x) for x in p.read_text().splitlines()]
    assert [r["record"] for r in recs] == ["session"] * 3 + ["network"]
    assert recs[-1]["session_count"] == 3
    assert set(recs[0]["qber_analytic"]) == {"total", "dark", "visibility", "crosstalk", "excess"}
    assert len(recs[-1]["mode_deltas"]) == 3


def test_nan_written_as_null(beijing_runs):
    from dataclasses import replace

    r = replace(beijing_runs[0].sessions[0], qber_measured=math.nan)
    assert session_record(r)["qber_measured"] is None


def test_missing_network_record(beijing_runs):
    recs = to_records(beijing_runs[0])[:-1]
    with pytest.raises(Exception):
        from_records(recs)


def test_table_mentions_rate_basis(beijing_runs):
    text = format_table(beijing_runs[1])
    assert "rate basis" in text and "A-C" in text and "QBER single" in text
