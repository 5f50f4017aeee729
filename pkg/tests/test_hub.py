import random
import time

import pytest
from hypothesis import given, strategies as st

from boros.contract import Distribution
from boros.core import AccountId, Keyring, LedgerState
from boros.hub import (ChannelHub, IntervalTree, LateReceipt, MalformedGcc, UnknownLeaf,
                       reconcile, tree_verify)
from boros.messages import make

H, ESCROW, K = AccountId.named("H"), AccountId.named("H/escrow"), AccountId.named("contract")
CHANNELS = [AccountId.named(f"ch{i}") for i in range(12)]
PARTIES = {b: (AccountId.named(f"{b.label}-a"), AccountId.named(f"{b.label}-c")) for b in CHANNELS}


def make_hub():
    kr = Keyring()
    for pair in PARTIES.values():
        for p in pair:
            kr.register(p)
    ledger = LedgerState.from_balances({K: 10**9})
    return ChannelHub(H, ESCROW, ledger, kr), kr, ledger


def join(hub, beta, c, sid=b"j"):
    hub.ledger.transfer(sid, K, ESCROW, c)
    return hub.hub_join(sid, beta, c, refund_to=K, parties=PARTIES[beta])


def iou(kr, sid, ac, bd, dx):
    a, c = PARTIES[ac]
    b, d = PARTIES[bd]
    fields = dict(beta_ac=ac, beta_bd=bd, dx=dx, hub=H)
    gcc_ac = make(kr, "gcc", sid, c, H, **fields)
    gcc_bd = make(kr, "gcc", sid, d, H, **fields)
    return make(kr, "iou", sid, a, H, gcc_ac=gcc_ac, gcc_bd=gcc_bd, **fields), \
        make(kr, "receipt", sid, b, H, beta_ac=ac, beta_bd=bd, dx=dx)


# -- interval tree -----------------------------------------------------------


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=12), st.data())
def test_every_leaf_proves_against_the_root(caps, data):
    tree = IntervalTree([(CHANNELS[i], c, 0) for i, c in enumerate(caps)])
    starts = [sum(caps[:i]) for i in range(len(caps))]
    for i, leaf in enumerate(tree.leaves):
        assert leaf.start == starts[i] and leaf.c == caps[i]
        assert tree_verify(tree.root, leaf, tree.prove(leaf.alpha))
    i = data.draw(st.integers(0, len(caps) - 1))
    leaf = tree.leaves[i]
    forged = type(leaf)(leaf.alpha, leaf.c + 1, leaf.u, leaf.start)
    assert not tree_verify(tree.root, forged, tree.prove(leaf.alpha))


@given(st.lists(st.tuples(st.sampled_from(["append", "update", "remove"]),
                          st.integers(0, 11), st.integers(0, 500)), max_size=40))
def test_incremental_tree_matches_rebuild(ops):
    tree, entries = IntervalTree(), {}
    for op, i, c in ops:
        beta = CHANNELS[i]
        if op == "append" and beta not in entries:
            tree.append(beta, c)
            entries[beta] = (c, 0)
        elif op == "update" and beta in entries:
            tree.update(beta, c, entries[beta][1] + 1)
            entries[beta] = (c, entries[beta][1] + 1)
        elif op == "remove" and beta in entries:
            tree.remove(beta)
            del entries[beta]
        assert tree.root == IntervalTree([(b, c, u) for b, (c, u) in entries.items()]).root


def test_unknown_leaf():
    with pytest.raises(UnknownLeaf):
        IntervalTree().prove(CHANNELS[0])


# -- hub ---------------------------------------------------------------------


def test_capacity_moves_only_on_timely_receipt():
    hub, kr, ledger = make_hub()
    ac, bd = CHANNELS[:2]
    join(hub, ac, 25)
    join(hub, bd, 40)
    msg, receipt = iou(kr, b"t1", ac, bd, 7)
    assert [m.kind for m in hub.hub_iou(msg, 3)] == ["iou-notify"]
    assert hub.capacity(ac) == 25
    with pytest.raises(LateReceipt):
        hub.hub_receipt(receipt, 5)
    assert [m.kind for m in hub.hub_receipt(receipt, 4)] == ["transferred"] * 2
    assert (hub.capacity(ac), hub.capacity(bd)) == (18, 47)
    assert ledger.balance(ESCROW) == hub.total_capacity() == 65
    # the same sid cannot be spent twice
    assert [m.kind for m in hub.hub_iou(msg, 6)] == ["transfer-failed"]


def test_iou_needs_both_grants():
    hub, kr, _ = make_hub()
    ac, bd = CHANNELS[:2]
    join(hub, ac, 25)
    join(hub, bd, 40)
    msg, _ = iou(kr, b"t1", ac, bd, 7)
    tampered = msg.replace(gcc_bd=msg["gcc_bd"].replace(dx=8))
    with pytest.raises(MalformedGcc):
        hub.hub_iou(tampered, 3)


def test_duplicate_join_is_refunded():
    hub, _, ledger = make_hub()
    assert join(hub, CHANNELS[0], 10)
    assert not join(hub, CHANNELS[0], 10)
    assert ledger.balance(ESCROW) == 10


def test_reconcile_applies_a_completed_shift():
    a, c = PARTIES[CHANNELS[0]]
    theta = Distribution.of(3, {a: 10, c: 15})
    assert reconcile(theta, 25, None) == theta
    assert reconcile(theta, 18, (a, -7)) == Distribution.of(4, {a: 3, c: 15})
    assert reconcile(theta, 18, None) is None
    assert reconcile(theta, 14, (a, -11)) is None


def test_escrow_and_commitment_invariants_under_random_ops():
    """10,000 random joins, ious, receipts and withdrawals."""
    rng = random.Random(2024)
    hub, kr, ledger = make_hub()
    waiting = []  # (receipt, round)
    t0 = time.perf_counter()
    for r in range(1, 10_001):
        op = rng.choice(("join", "iou", "receipt", "withdraw"))
        members = list(hub.members)
        if op == "join":
            outside = [b for b in CHANNELS if b not in hub.members]
            if outside:
                assert join(hub, rng.choice(outside), rng.randint(1, 200), sid=b"j%d" % r)
        elif op == "iou" and len(members) >= 2:
            ac, bd = rng.sample(members, 2)
            msg, receipt = iou(kr, b"t%d" % r, ac, bd, rng.randint(1, 60))
            if hub.hub_iou(msg, r)[0].kind == "iou-notify":
                waiting.append((receipt, r))
        elif op == "receipt" and waiting:
            receipt, created = waiting.pop(rng.randrange(len(waiting)))
            if r == created + 1:
                hub.hub_receipt(receipt, r)
            else:
                hub._fail_pending(hub.pending[receipt.sid])
        elif op == "withdraw" and members:
            beta = rng.choice(members)
            hub.hub_withdraw(b"w%d" % r, beta, hub.capacity(beta), refund_to=K)
        assert ledger.balance(ESCROW) == hub.total_capacity()
        assert hub.tree_commit() == hub.recompute_commit()
    assert len(hub.completed) > 100  # the walk really moved capacity
    assert time.perf_counter() - t0 < 10
