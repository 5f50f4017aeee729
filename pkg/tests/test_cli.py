import csv

import pytest

from boros.cli import main


def test_costs(capsys):
    assert main(["costs", "cc-transfer"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "cross-channel transfer,0,17,17"


def test_run_writes_trace(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    assert main(["run", "close", "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "closed" in out and "properties ok" in out
    assert len(trace.read_text().splitlines()) == 6


def test_oracle_diff(capsys):
    assert main(["oracle-diff", "lifecycle"]) == 0
    assert capsys.readouterr().out.strip() == "equivalent"


def test_fuzz_csv(tmp_path):
    out = tmp_path / "fuzz.csv"
    assert main(["fuzz", "join", "--n", "20", "--out", str(out)]) == 0
    [row] = list(csv.DictReader(out.open()))
    assert row["runs"] == "20" and row["P1"] == row["P2"] == row["P3"] == "0"


def test_netsim_csv(tmp_path):
    out = tmp_path / "ns.csv"
    assert main(["netsim", "--n", "100", "--alpha", "0.05", "0.15", "--seeds", "2",
                 "--pairs", "300", "--router", "sp", "--router", "em", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open(encoding="utf-8")))
    assert [r["alpha"] for r in rows] == ["0.05", "0.15"]
    assert float(rows[1]["CH-FW"]) <= float(rows[1]["PN-FW"])


def test_single_arm(capsys):
    assert main(["netsim", "--n", "50", "--seeds", "1", "--pairs", "50", "--kind", "ch"]) == 0
    header = capsys.readouterr().out.splitlines()[0]
    assert "CH-FW" in header and "PN-FW" not in header


def test_unknown_scenario():
    with pytest.raises(SystemExit):
        main(["run", "no-such-scenario"])


def test_infeasible_topology_reports_error(capsys):
    assert main(["netsim", "--n", "5", "--ratio", "3", "--seeds", "1", "--pairs", "5"]) == 2
    assert "error" in capsys.readouterr().err
