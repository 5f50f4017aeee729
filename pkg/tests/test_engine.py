"""End-to-end protocol runs: output rounds, balances and hub state."""

import pytest
from hypothesis import given, settings, strategies as st

from boros.harness import library, run_scenario
from boros.harness.scenario import account

CORPUS = library.corpus()


def outputs(name_or_scenario):
    s = CORPUS[name_or_scenario] if isinstance(name_or_scenario, str) else name_or_scenario
    return sorted(run_scenario(s).outputs())


def final(trace):
    return trace.rounds[-1].balances


def test_open_timing_and_escrow():
    t = run_scenario(CORPUS["open"])
    assert sorted(t.outputs()) == [(3, "A", "opened", "o1"), (3, "C", "opened", "o1")]
    assert final(t)["A"] == 90 and final(t)["C"] == 85 and final(t)["contract"] == 25


def test_open_without_confirmation_refunds():
    t = run_scenario(CORPUS["open-failed"])
    assert sorted(t.outputs()) == [(3, "A", "open-failed", "o1"), (3, "C", "open-failed", "o1")]
    assert final(t)["A"] == 100


def test_update_timing():
    assert outputs("update") == [(2, "C", "updated", "u1"), (3, "A", "updated", "u1")]
    assert outputs("update-refused") == []
    assert outputs("update-bad-sum") == []


def test_join_moves_escrow_to_hub():
    t = run_scenario(CORPUS["join"])
    assert sorted(t.outputs()) == [(3, "A", "joined", "j1"), (3, "C", "joined", "j1")]
    assert final(t)["H/escrow"] == 25 and final(t)["contract"] == 0
    assert outputs("join-failed") == [(2, "C", "join-failed", "j1"), (3, "A", "join-failed", "j1")]


def test_cc_transfer_success_moves_capacity():
    t = run_scenario(CORPUS["cc-transfer"])
    assert sorted(t.outputs()) == [(7, "C", "cc-transferred", "t1"),
                                   (7, "D", "cc-transferred", "t1"),
                                   (8, "A", "cc-transferred", "t1"),
                                   (8, "B", "cc-transferred", "t1")]
    hub = t.world.hubs[account("H")]
    assert hub.capacity(account("ac")) == 18 and hub.capacity(account("bd")) == 47
    views = {p.label: t.world.parties[p].view(account("ac" if p.label in "AC" else "bd"))
             for p in t.world.parties}
    assert views["A"].theta.share(account("A")) == 3
    assert views["C"].theta == views["A"].theta
    assert views["B"].theta.share(account("B")) == 12


@pytest.mark.parametrize("denier", ["C", "D"])
def test_refused_transfer_fails_everywhere(denier):
    got = outputs(f"cc-refused-by-{denier}")
    assert (2, denier, "transfer-failed", "t1") in got
    assert {p for _, p, k, _ in got if k == "transfer-failed"} == {"A", "B", "C", "D"}
    assert (4, "B", "transfer-failed", "t1") in got


def test_withdraw_and_concurrent_withdraw():
    assert outputs("withdraw") == [(3, "A", "withdrawn", "w1"), (3, "C", "withdrawn", "w1")]
    assert outputs("withdraw-unilateral") == [(3, "A", "withdrawn", "w1"),
                                              (3, "C", "withdrawn", "w1")]
    assert (2, "C", "withdraw-failed", "w2") in outputs("withdraw-failed")


def test_close_pays_out_and_is_ignored_while_joined():
    t = run_scenario(CORPUS["close"])
    assert sorted(t.outputs()) == [(3, "A", "closed", "c1"), (3, "C", "closed", "c1")]
    assert (final(t)["A"], final(t)["C"]) == (110, 115)
    assert outputs("close-while-joined") == [(2, "C", "close-failed", "c1")]


def test_lifecycle_conserves_coins():
    t = run_scenario(CORPUS["lifecycle"])
    bal = final(t)
    assert sum(bal.values()) == 400 + 40  # parties plus the pre-joined bd escrow
    assert (bal["A"], bal["C"]) == (90 + 3, 85 + 13)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_runs_are_deterministic(name):
    assert run_scenario(CORPUS[name]).digest() == run_scenario(CORPUS[name]).digest()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10))
def test_any_affordable_amount_transfers(dx):
    t = run_scenario(library.cc_transfer(dx=dx))
    hub = t.world.hubs[account("H")]
    assert hub.capacity(account("ac")) == 25 - dx
    assert hub.capacity(account("bd")) == 40 + dx
    assert len(t.outputs()) == 4
