import pytest
from hypothesis import given, strategies as st

from boros.core import (AccountId, CoinOverflow, InsufficientFunds, Keyring, LedgerState,
                        MAX_COINS, UnknownAccount, UnknownSigner, coins, encode, ledger_transfer,
                        session_id)
from boros.messages import make, sender_signed

A, B, C = (AccountId.named(x) for x in "ABC")


def test_named_accounts_are_stable_and_compare_by_raw():
    assert AccountId.named("A") == A
    assert AccountId(A.raw, "other label") == A
    with pytest.raises(ValueError):
        AccountId(b"short")


def test_coins_rejects_bad_amounts():
    assert coins(0) == 0
    for bad, exc in ((-1, ValueError), (True, TypeError), (1.0, TypeError),
                     (MAX_COINS + 1, CoinOverflow)):
        with pytest.raises(exc):
            coins(bad)


def test_session_id_must_be_non_empty():
    assert session_id("t1") == b"t1"
    with pytest.raises(ValueError):
        session_id("")


def test_encoding_separates_types_and_boundaries():
    assert encode("ab", "c") != encode("a", "bc")
    assert encode(1) != encode(True)
    assert encode(b"x") != encode("x")
    assert encode([1, 2]) != encode(1, 2)
    with pytest.raises(ValueError):
        encode(-1)


@given(st.lists(st.one_of(st.integers(0, MAX_COINS), st.text(), st.binary()), max_size=5),
       st.lists(st.one_of(st.integers(0, MAX_COINS), st.text(), st.binary()), max_size=5))
def test_encoding_is_injective(xs, ys):
    assert (encode(*xs) == encode(*ys)) == (xs == ys and
                                           [type(x) for x in xs] == [type(y) for y in ys])


def test_signatures_verify_only_for_signer_and_payload():
    kr = Keyring(seed=1)
    kr.register(A)
    kr.register(B)
    sig = kr.sign(A, b"payload")
    assert kr.verify(A, b"payload", sig)
    assert not kr.verify(B, b"payload", sig)
    assert not kr.verify(A, b"other", sig)
    assert not kr.verify(A, b"payload", "garbage")
    with pytest.raises(UnknownSigner):
        kr.sign(C, b"payload")
    # a keyring from another seed cannot produce the same tags
    other = Keyring(seed=2)
    other.register(A)
    assert not kr.verify(A, b"payload", other.sign(A, b"payload"))


def test_message_signature_binds_recipient():
    kr = Keyring()
    for p in (A, B, C):
        kr.register(p)
    msg = make(kr, "fr-notify", b"s", A, B, beta=C, deadline=4)
    assert sender_signed(kr, msg)
    assert not sender_signed(kr, msg.readdressed(C))
    assert not sender_signed(kr, msg.replace(deadline=5))


def test_ledger_transfer_is_atomic():
    state = LedgerState.from_balances({A: 10, B: 0})
    with pytest.raises(InsufficientFunds):
        state.transfer(b"s", A, B, 11)
    with pytest.raises(UnknownAccount):
        state.transfer(b"s", C, A, 1)
    assert state.snapshot() == LedgerState.from_balances({A: 10, B: 0}).snapshot()
    new = ledger_transfer(state, b"s", A, B, 4)
    assert (state.balance(A), new.balance(A), new.balance(B)) == (10, 6, 4)


@given(st.lists(st.tuples(st.sampled_from([A, B, C]), st.sampled_from([A, B, C]),
                          st.integers(0, 50)), max_size=30))
def test_ledger_conserves_supply(moves):
    state = LedgerState.from_balances({A: 40, B: 40, C: 40})
    for src, dst, amount in moves:
        try:
            state.transfer(b"s", src, dst, amount)
        except InsufficientFunds:
            pass
        assert state.total() == 120
        assert min(state.accounts.values()) >= 0
