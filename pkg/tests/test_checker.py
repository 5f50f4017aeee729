"""The property checker passes honest runs and catches deliberately broken code."""

import pytest

from boros.engine import Party
from boros.harness import check_properties, library, run_scenario
from boros.harness.checker import dispute_latency
from boros.hub import ChannelHub


def test_honest_corpus_has_no_findings():
    for name, s in library.corpus().items():
        assert check_properties(run_scenario(s)).ok, name


def test_stale_complaint_is_answered_in_time():
    t = run_scenario(library.stale_complaint())
    assert check_properties(t, require_settled=True).ok
    [(channel, opened, ended)] = dispute_latency(t)
    assert channel == "ac" and ended - opened <= t.scenario.params.delta


def test_refused_transfer_disputes_resolve_within_delta():
    t = run_scenario(library.cc_transfer(deny="D", max_rounds=16))
    spans = dispute_latency(t)
    assert spans and all(e is not None and e - o <= t.scenario.params.delta for _, o, e in spans)
    assert check_properties(t).ok


def test_silent_respondent_loses_money_and_is_flagged(monkeypatch):
    monkeypatch.setattr(Party, "on_fr_notify", lambda self, msg: None)
    report = check_properties(run_scenario(library.stale_complaint()))
    assert [(f.party, f.detail) for f in report.findings] == [("C", "received 15, owed 18")]


def test_slow_hub_violates_liveness(monkeypatch):
    original = ChannelHub.hub_resolve_dispute

    def slow(self, beta, reply, round_):
        d = self.disputes.get(beta)
        if d is not None and round_ < d.deadline + 2:
            return []
        return original(self, beta, None, round_)

    monkeypatch.setattr(ChannelHub, "hub_resolve_dispute", slow)
    t = run_scenario(library.cc_transfer(deny="D", max_rounds=16))
    report = check_properties(t)
    assert any("took" in f.detail for f in report.violations("P3"))


def test_counts_cover_every_property():
    assert set(check_properties(run_scenario(library.update())).counts()) >= {"P1", "P2", "P3"}
