import pytest

from boros.contract import (BadDistribution, ChannelContract, ChannelExists, ContractError,
                            Distribution, NotOpening, SignedDistribution, Status, StillJoined,
                            WrongParty)
from boros.core import AccountId, InsufficientFunds, Keyring, LedgerState

A, C, X = (AccountId.named(x) for x in "ACX")
K = AccountId.named("contract")
BETA = AccountId.named("ac")


@pytest.fixture
def world():
    kr = Keyring()
    for p in (A, C, X):
        kr.register(p)
    ledger = LedgerState.from_balances({A: 100, C: 100})
    return ChannelContract(K, ledger, kr), kr, ledger


def open_channel(contract, x_a=10, x_c=15):
    contract.open_request(b"o", BETA, A, C, x_a, 1)
    return contract.open_confirm(b"o", BETA, C, x_c, 2)


def signed(kr, theta, *who):
    return SignedDistribution(BETA, theta, tuple(kr.sign(p, theta.payload(BETA)) for p in who))


def test_distribution_is_canonical_and_validated():
    d = Distribution.of(1, {C: 15, A: 10})
    assert d == Distribution(1, ((C, 15), (A, 10)))
    assert d.total == 25 and d.share(A) == 10
    assert d.shifted(A, -3) == Distribution.of(2, {A: 7, C: 15})
    with pytest.raises(ValueError):
        Distribution.of(0, {A: 1, C: 1})
    with pytest.raises(ValueError):
        Distribution.of(1, {A: -1, C: 1})


def test_open_locks_both_deposits(world):
    contract, _, ledger = world
    notes = open_channel(contract)
    assert [m.kind for m in notes] == ["opened", "opened"]
    ch = contract.channel(BETA)
    assert ch.status is Status.OPEN and ch.capacity == 25
    assert (ledger.balance(A), ledger.balance(C), ledger.balance(K)) == (90, 85, 25)
    assert contract.escrow_expected() == 25


def test_open_errors(world):
    contract, _, _ = world
    with pytest.raises(WrongParty):
        contract.open_request(b"o", BETA, A, A, 1, 1)
    with pytest.raises(InsufficientFunds):
        contract.open_request(b"o", BETA, A, C, 500, 1)
    contract.open_request(b"o", BETA, A, C, 10, 1)
    with pytest.raises(ChannelExists):
        contract.open_request(b"o2", BETA, C, A, 1, 1)
    with pytest.raises(WrongParty):
        contract.open_confirm(b"o", BETA, A, 5, 2)
    with pytest.raises(NotOpening):
        contract.open_confirm(b"o", BETA, C, 5, 3)


def test_unconfirmed_open_is_refunded(world):
    contract, _, ledger = world
    contract.open_request(b"o", BETA, A, C, 10, 1)
    assert contract.begin_round(2) == []
    notes = contract.begin_round(3)
    assert [m.kind for m in notes] == ["open-failed", "open-failed"]
    assert ledger.balance(A) == 100 and BETA not in contract.channels


def test_close_pays_the_highest_version(world):
    contract, kr, ledger = world
    open_channel(contract)
    v1 = contract.channel(BETA).dist
    v2 = signed(kr, Distribution.of(2, {A: 3, C: 22}), A, C)
    contract.contract_close(b"c", BETA, A, 25, SignedDistribution(BETA, v1), 3)
    notes = contract.contract_close(b"c", BETA, C, 25, v2, 4)
    assert [m.kind for m in notes] == ["closed", "closed"]
    assert (ledger.balance(A), ledger.balance(C), ledger.balance(K)) == (93, 107, 0)


def test_close_rejects_half_signed_evidence(world):
    contract, kr, ledger = world
    open_channel(contract)
    forged = signed(kr, Distribution.of(2, {A: 25, C: 0}), A)
    with pytest.raises(BadDistribution):
        contract.contract_close(b"c", BETA, A, 25, forged, 3)
    outsider = signed(kr, Distribution.of(2, {A: 25, C: 0}), A, X)
    with pytest.raises(BadDistribution):
        contract.contract_close(b"c", BETA, A, 25, outsider, 3)


def test_unilateral_close_after_timeout(world):
    contract, _, ledger = world
    open_channel(contract)
    contract.contract_close(b"c", BETA, A, 25, SignedDistribution(BETA, contract.channel(BETA).dist), 3)
    assert contract.begin_round(4) == []
    assert [m.kind for m in contract.begin_round(5)] == ["closed", "closed"]
    assert (ledger.balance(A), ledger.balance(C)) == (100, 100)


def test_joined_channel_cannot_close(world):
    contract, _, _ = world
    open_channel(contract)
    ch = contract.channel(BETA)
    ch.move_to(Status.JOINED)
    with pytest.raises(StillJoined):
        contract.contract_close(b"c", BETA, A, 25, SignedDistribution(BETA, ch.dist), 3)
    with pytest.raises(ContractError):
        ch.move_to(Status.OPENING)
