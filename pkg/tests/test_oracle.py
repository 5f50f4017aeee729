import pytest

from boros.harness import library
from boros.harness.oracle import (IdealHubFunctionality, OracleUnsupportedAdversary,
                                  compare_to_oracle, oracle_diff, run_oracle)

CORPUS = library.corpus()


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_protocol_matches_reference(name):
    assert oracle_diff(CORPUS[name]) == []


def test_reference_outputs_for_a_transfer():
    ideal = run_oracle(CORPUS["cc-transfer"])
    assert ideal.outputs[7] == [("C", "cc-transferred", "t1"), ("D", "cc-transferred", "t1")]
    assert ideal.outputs[8] == [("A", "cc-transferred", "t1"), ("B", "cc-transferred", "t1")]


def test_adversarial_scenarios_are_out_of_scope():
    with pytest.raises(OracleUnsupportedAdversary):
        run_oracle(library.stale_complaint())
    conf = library.cc_transfer()
    conf.deny.add(("C", "t1", "conf"))
    with pytest.raises(OracleUnsupportedAdversary):
        run_oracle(conf)


def test_comparison_detects_a_late_output(monkeypatch):
    original = IdealHubFunctionality.emit
    monkeypatch.setattr(IdealHubFunctionality, "emit",
                        lambda self, r, p, kind, sid: original(self, r + (kind == "updated"), p,
                                                               kind, sid))
    assert not compare_to_oracle(CORPUS["update"])
    assert compare_to_oracle(CORPUS["close"])


def test_comparison_detects_a_wrong_payout(monkeypatch):
    monkeypatch.setattr(IdealHubFunctionality, "op_close",
                        lambda self, s, st, responders: None)
    diffs = oracle_diff(CORPUS["close"])
    assert any("balances" in d for d in diffs) and any("outputs" in d for d in diffs)
