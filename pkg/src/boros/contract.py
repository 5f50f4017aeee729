"""On-chain payment-channel contract: open, join, withdraw and close."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from .core import (AccountId, BorosError, Keyring, LedgerState, Signature, coins, digest,
                   encode)
from .messages import Message, signing_payload

if TYPE_CHECKING:
    from .hub import ChannelHub


class ContractError(BorosError):
    pass


class ChannelExists(ContractError):
    pass


class NotOpening(ContractError):
    pass


class NotOpen(ContractError):
    pass


class NotJoined(ContractError):
    pass


class StillJoined(ContractError):
    pass


class WrongParty(ContractError):
    pass


class BadSignature(ContractError):
    pass


class CapacityMismatch(ContractError):
    pass


class BadDistribution(ContractError):
    pass


class UnknownChannel(ContractError):
    pass


@dataclass(frozen=True)
class Distribution:
    """Versioned split of a channel's capacity between its two parties."""

    version: int
    shares: tuple[tuple[AccountId, int], tuple[AccountId, int]]

    def __post_init__(self):
        if isinstance(self.version, bool) or not isinstance(self.version, int) or self.version < 1:
            raise ValueError(f"version must be a positive integer, got {self.version!r}")
        if len(self.shares) != 2 or self.shares[0][0] == self.shares[1][0]:
            raise ValueError("a distribution covers exactly two distinct parties")
        for _, amount in self.shares:
            coins(amount)
        if self.shares[0][0] > self.shares[1][0]:
            object.__setattr__(self, "shares", (self.shares[1], self.shares[0]))

    @classmethod
    def of(cls, version: int, shares: Mapping[AccountId, int]) -> "Distribution":
        items = tuple(sorted(shares.items()))
        if len(items) != 2:
            raise ValueError("a distribution covers exactly two parties")
        return cls(version, items)  # type: ignore[arg-type]

    @property
    def parties(self) -> tuple[AccountId, AccountId]:
        return (self.shares[0][0], self.shares[1][0])

    def share(self, party: AccountId) -> int:
        for who, amount in self.shares:
            if who == party:
                return amount
        raise KeyError(str(party))

    @property
    def total(self) -> int:
        return self.shares[0][1] + self.shares[1][1]

    def shifted(self, party: AccountId, delta: int, bump: bool = True) -> "Distribution":
        """Change ``party``'s share by ``delta``; the other share stays fixed."""
        new = {who: amount + (delta if who == party else 0) for who, amount in self.shares}
        if party not in new:
            raise KeyError(str(party))
        return Distribution.of(self.version + (1 if bump else 0), new)

    def payload(self, beta: AccountId) -> bytes:
        return encode("dist", beta, self.version, self.shares)

    def cert_payload(self, beta: AccountId) -> bytes:
        return encode("cert", beta, self.version, self.shares)

    def canonical(self):
        return (self.version, self.shares)

    def describe(self):
        return {"w": self.version, **{str(p): v for p, v in self.shares}}


@dataclass(frozen=True)
class SignedDistribution:
    """A distribution plus whatever signatures back it.

    It is acceptable evidence when both channel parties signed it, or when a
    hub certified it while resolving a dispute.
    """

    beta: AccountId
    theta: Distribution
    sigs: tuple[Signature, ...] = ()

    def signed_by(self, keyring: Keyring, party: AccountId) -> bool:
        payload = self.theta.payload(self.beta)
        return any(keyring.verify(party, payload, s) for s in self.sigs)

    def certified_by(self, keyring: Keyring, hubs: Iterable[AccountId]) -> bool:
        payload = self.theta.cert_payload(self.beta)
        return any(keyring.verify(h, payload, s) for h in hubs for s in self.sigs)

    def valid(self, keyring: Keyring, parties: tuple[AccountId, AccountId],
              hubs: Iterable[AccountId] = ()) -> bool:
        if set(self.theta.parties) != set(parties):
            return False
        if all(self.signed_by(keyring, p) for p in parties):
            return True
        return self.certified_by(keyring, hubs)

    def with_sig(self, sig: Signature) -> "SignedDistribution":
        if sig in self.sigs:
            return self
        return SignedDistribution(self.beta, self.theta, self.sigs + (sig,))

    def canonical(self):
        return (self.beta, self.theta, self.sigs)

    def describe(self):
        return {"beta": str(self.beta), **self.theta.describe(), "sigs": len(self.sigs)}


class Status(enum.Enum):
    OPENING = "opening"
    OPEN = "open"
    JOINED = "joined"
    WITHDRAWING = "withdrawing"
    CLOSING = "closing"
    CLOSED = "closed"


_ALLOWED = {
    Status.OPENING: {Status.OPEN, Status.CLOSED},
    Status.OPEN: {Status.JOINED, Status.CLOSING},
    Status.JOINED: {Status.WITHDRAWING, Status.CLOSED},
    Status.WITHDRAWING: {Status.OPEN, Status.JOINED, Status.CLOSED},
    Status.CLOSING: {Status.CLOSED},
    Status.CLOSED: set(),
}


@dataclass
class ChannelState:
    beta: AccountId
    party_a: AccountId
    party_c: AccountId
    capacity: int
    dist: Distribution | None  # latest distribution recorded on chain
    status: Status
    hub: AccountId | None = None
    last_update: int = 0
    x_a: int = 0

    @property
    def parties(self) -> tuple[AccountId, AccountId]:
        return (self.party_a, self.party_c)

    def other(self, party: AccountId) -> AccountId:
        if party == self.party_a:
            return self.party_c
        if party == self.party_c:
            return self.party_a
        raise WrongParty(f"{party} is not a party of {self.beta}")

    def move_to(self, status: Status) -> None:
        if status not in _ALLOWED[self.status]:
            raise ContractError(f"{self.beta}: illegal transition {self.status.value} -> {status.value}")
        self.status = status


@dataclass
class _OpenSession:
    sid: bytes
    start: int


@dataclass
class _WithdrawSession:
    sid: bytes
    initiator: AccountId
    hub: AccountId
    start: int
    evidence: list[SignedDistribution] = field(default_factory=list)


@dataclass
class _CloseSession:
    sid: bytes
    initiator: AccountId
    start: int
    evidence: list[SignedDistribution] = field(default_factory=list)


class ChannelContract:
    """Contract functionality holding escrow for channels not in a hub.

    Methods return the notifications the contract emits toward parties; the
    scheduler delivers them at the start of the next round unless stated
    otherwise.
    """

    def __init__(self, account: AccountId, ledger: LedgerState, keyring: Keyring,
                 hubs: Mapping[AccountId, "ChannelHub"] | None = None):
        self.account = account
        self.ledger = ledger
        self.keyring = keyring
        self.hubs: dict[AccountId, ChannelHub] = dict(hubs or {})
        self.channels: dict[AccountId, ChannelState] = {}
        self._opening: dict[AccountId, _OpenSession] = {}
        self._withdrawing: dict[AccountId, _WithdrawSession] = {}
        self._closing: dict[AccountId, _CloseSession] = {}
        ledger.accounts.setdefault(account, 0)

    # -- helpers -------------------------------------------------------------

    def _note(self, kind: str, sid: bytes, to: AccountId, **body) -> Message:
        return Message(kind, sid, self.account, to, body)

    def _both(self, ch: ChannelState, kind: str, sid: bytes, **body) -> list[Message]:
        return [self._note(kind, sid, p, beta=ch.beta, **body) for p in ch.parties]

    def channel(self, beta: AccountId) -> ChannelState:
        ch = self.channels.get(beta)
        if ch is None:
            raise UnknownChannel(str(beta))
        return ch

    def _hub_ids(self) -> tuple[AccountId, ...]:
        return tuple(self.hubs)

    def _check_evidence(self, ch: ChannelState, ev: SignedDistribution, c: int) -> None:
        if ev.beta != ch.beta:
            raise BadDistribution("distribution is for another channel")
        if ev.theta.total != c:
            raise BadDistribution(f"shares sum to {ev.theta.total}, capacity is {c}")
        if ch.dist is not None and ev.theta == ch.dist:
            return
        if not ev.valid(self.keyring, ch.parties, self._hub_ids()):
            raise BadDistribution("distribution lacks both signatures")

    def _best(self, ch: ChannelState, candidates: Iterable[SignedDistribution]) -> Distribution:
        best = ch.dist
        for ev in candidates:
            if best is None or ev.theta.version > best.version:
                best = ev.theta
        assert best is not None
        return best

    def install(self, ch: ChannelState) -> None:
        """Place a pre-existing channel (scenario setup); escrow must already hold it."""
        if ch.beta in self.channels:
            raise ChannelExists(str(ch.beta))
        self.channels[ch.beta] = ch

    # -- open ----------------------------------------------------------------

    def open_request(self, sid: bytes, beta: AccountId, sender: AccountId,
                     counterparty: AccountId, x_a: int, round_: int) -> list[Message]:
        if beta in self.channels:
            raise ChannelExists(str(beta))
        if counterparty == sender:
            raise WrongParty("cannot open a channel with oneself")
        self.ledger.transfer(sid, sender, self.account, coins(x_a))
        self.channels[beta] = ChannelState(beta, sender, counterparty, x_a, None,
                                           Status.OPENING, x_a=x_a)
        self._opening[beta] = _OpenSession(sid, round_)
        return [self._note("opening", sid, counterparty, beta=beta, opener=sender, x=x_a)]

    def open_confirm(self, sid: bytes, beta: AccountId, sender: AccountId, x_c: int,
                     round_: int) -> list[Message]:
        ch = self.channel(beta)
        sess = self._opening.get(beta)
        if ch.status is not Status.OPENING or sess is None or sess.sid != sid:
            raise NotOpening(str(beta))
        if sender != ch.party_c:
            raise WrongParty(f"{sender} may not confirm {beta}")
        if round_ > sess.start + 1:
            raise NotOpening(f"{beta}: confirmation after round 2")
        self.ledger.transfer(sid, sender, self.account, coins(x_c))
        ch.capacity = ch.x_a + x_c
        ch.dist = Distribution.of(1, {ch.party_a: ch.x_a, ch.party_c: x_c})
        ch.move_to(Status.OPEN)
        del self._opening[beta]
        return self._both(ch, "opened", sid, c=ch.capacity, theta=ch.dist)

    def open_timeout(self, sid: bytes, beta: AccountId, round_: int) -> list[Message]:
        sess = self._opening.get(beta)
        if sess is None or sess.sid != sid or round_ < sess.start + 2:
            return []
        ch = self.channels.pop(beta)
        del self._opening[beta]
        self.ledger.transfer(sid, self.account, ch.party_a, ch.x_a)
        return self._both(ch, "open-failed", sid)

    # -- join ----------------------------------------------------------------

    def contract_join(self, sid: bytes, beta: AccountId, hub: AccountId, c: int,
                      theta: Distribution, sig_a: Signature | None, sig_c: Signature | None,
                      round_: int) -> list[Message]:
        ch = self.channel(beta)
        if ch.status is not Status.OPEN:
            raise NotOpen(f"{beta} is {ch.status.value}")
        payload = signing_payload("join", sid, ch.party_c,
                                  {"beta": beta, "hub": hub, "c": c, "theta": theta})
        if not (self.keyring.verify(ch.party_a, payload, sig_a)
                and self.keyring.verify(ch.party_c, payload, sig_c)):
            raise BadSignature(f"join on {beta} lacks both signatures")
        if c != ch.capacity or theta.total != c or set(theta.parties) != set(ch.parties):
            raise CapacityMismatch(f"{beta}: join names c={c}, contract holds {ch.capacity}")
        target = self.hubs.get(hub)
        if target is None:
            raise UnknownChannel(f"no hub {hub}")
        self.ledger.transfer(sid, self.account, target.escrow, c)
        if not target.hub_join(sid, beta, c, refund_to=self.account, parties=ch.parties):
            return self._both(ch, "join-failed", sid, hub=hub)
        ch.move_to(Status.JOINED)
        ch.hub = hub
        return self._both(ch, "joined", sid, hub=hub, c=c, theta=theta,
                          evidence=target.certify(beta, theta))

    # -- withdraw ------------------------------------------------------------

    def contract_withdraw(self, sid: bytes, beta: AccountId, hub: AccountId, c: int,
                          evidence: SignedDistribution, sender: AccountId,
                          round_: int) -> list[Message]:
        ch = self.channel(beta)
        other = ch.other(sender)
        sess = self._withdrawing.get(beta)
        if sess is None:
            if ch.status is not Status.JOINED:
                raise NotJoined(f"{beta} is {ch.status.value}")
            if hub != ch.hub:
                raise NotJoined(f"{beta} is not in hub {hub}")
            self._check_evidence(ch, evidence, c)
            ch.move_to(Status.WITHDRAWING)
            self._withdrawing[beta] = _WithdrawSession(sid, sender, hub, round_, [evidence])
            return [self._note("withdrawing", sid, other, beta=beta, hub=hub, c=c,
                               theta=evidence.theta)]
        if sess.sid != sid or sender == sess.initiator or round_ > sess.start + 1:
            raise NotJoined(f"{beta} already has a withdrawal in progress")
        self._check_evidence(ch, evidence, c)
        if c != sess.evidence[0].theta.total:
            raise CapacityMismatch("co-signer names a different capacity")
        sess.evidence.append(evidence)
        return self._forward_withdraw(ch, sess)

    def _forward_withdraw(self, ch: ChannelState, sess: _WithdrawSession) -> list[Message]:
        del self._withdrawing[ch.beta]
        c = sess.evidence[0].theta.total
        hub = self.hubs[sess.hub]
        ok = hub.hub_withdraw(sess.sid, ch.beta, c, refund_to=self.account)
        if not ok:
            ch.move_to(Status.JOINED)
            return self._both(ch, "withdraw-failed", sess.sid, hub=sess.hub)
        ch.capacity = c
        ch.dist = max(sess.evidence, key=lambda e: e.theta.version).theta
        ch.last_update = hub.update_count(ch.beta)
        ch.hub = None
        ch.move_to(Status.OPEN)
        return self._both(ch, "withdrawn", sess.sid, hub=sess.hub, c=c, theta=ch.dist)

    # -- close ---------------------------------------------------------------

    def contract_close(self, sid: bytes, beta: AccountId, sender: AccountId, c: int,
                       evidence: SignedDistribution, round_: int) -> list[Message]:
        ch = self.channel(beta)
        other = ch.other(sender)
        if ch.status in (Status.JOINED, Status.WITHDRAWING):
            raise StillJoined(f"{beta} must withdraw from its hub before closing")
        sess = self._closing.get(beta)
        if sess is None:
            if ch.status is not Status.OPEN:
                raise NotOpen(f"{beta} is {ch.status.value}")
            if c != ch.capacity:
                raise BadDistribution(f"close names c={c}, capacity is {ch.capacity}")
            self._check_evidence(ch, evidence, ch.capacity)
            ch.move_to(Status.CLOSING)
            self._closing[beta] = _CloseSession(sid, sender, round_, [evidence])
            return [self._note("closing", sid, other, beta=beta, c=c, theta=evidence.theta)]
        if sess.sid != sid or sender == sess.initiator or round_ > sess.start + 1:
            raise NotOpen(f"{beta} is already closing")
        try:
            self._check_evidence(ch, evidence, ch.capacity)
        except BadDistribution:
            return []  # an invalid reply is ignored; the initiator's submission stands
        sess.evidence.append(evidence)
        return self._payout(ch, sess)

    def _payout(self, ch: ChannelState, sess: _CloseSession) -> list[Message]:
        del self._closing[ch.beta]
        theta = self._best(ch, sess.evidence)
        for party, amount in theta.shares:
            if amount:
                self.ledger.transfer(sess.sid, self.account, party, amount)
        ch.dist = theta
        ch.move_to(Status.CLOSED)
        return self._both(ch, "closed", sess.sid, theta=theta)

    # -- scheduler hooks -----------------------------------------------------

    def begin_round(self, round_: int) -> list[Message]:
        """Round-2 deadlines: refund unconfirmed opens, go unilateral on withdraw/close."""
        out: list[Message] = []
        for beta, sess in sorted(self._opening.items()):
            out += self.open_timeout(sess.sid, beta, round_)
        for beta, wsess in sorted(self._withdrawing.items()):
            if round_ >= wsess.start + 2:
                out += self._forward_withdraw(self.channels[beta], wsess)
        for beta, csess in sorted(self._closing.items()):
            if round_ >= csess.start + 2:
                out += self._payout(self.channels[beta], csess)
        return out

    def force_closed(self, beta: AccountId, theta: Distribution) -> None:
        """Record that a hub closed a member channel and paid its parties directly."""
        ch = self.channel(beta)
        self._withdrawing.pop(beta, None)
        ch.dist = theta
        ch.capacity = theta.total
        ch.hub = None
        ch.status = Status.CLOSED

    def escrow_expected(self) -> int:
        total = 0
        for ch in self.channels.values():
            if ch.status is Status.OPENING:
                total += ch.x_a
            elif ch.status in (Status.OPEN, Status.CLOSING):
                total += ch.capacity
        return total

    def handle(self, msg: Message, round_: int) -> list[Message]:
        """Dispatch a party transaction. Errors propagate to the scheduler."""
        kind, b = msg.kind, msg.body
        if kind == "open":
            beta = b["beta"]
            ch = self.channels.get(beta)
            if ch is not None and ch.status is Status.OPENING:
                return self.open_confirm(msg.sid, beta, msg.sender, b["x"], round_)
            return self.open_request(msg.sid, beta, msg.sender, b["counterparty"], b["x"], round_)
        if kind == "join":
            ch = self.channel(b["beta"])
            sig_a = _sig_of(msg.sigs, ch.party_a)
            sig_c = _sig_of(msg.sigs, ch.party_c)
            return self.contract_join(msg.sid, b["beta"], b["hub"], b["c"], b["theta"],
                                      sig_a, sig_c, round_)
        if kind == "withdraw":
            try:
                return self.contract_withdraw(msg.sid, b["beta"], b["hub"], b["c"], b["evidence"],
                                              msg.sender, round_)
            except ContractError:
                return [self._note("withdraw-failed", msg.sid, msg.sender, beta=b["beta"])]
        if kind == "close":
            return self.contract_close(msg.sid, b["beta"], msg.sender, b["c"], b["evidence"],
                                       round_)
        raise ContractError(f"contract does not accept {kind!r}")

    def state_digest(self) -> str:
        rows = []
        for beta in sorted(self.channels):
            ch = self.channels[beta]
            rows.append((beta, ch.party_a, ch.party_c, ch.capacity, ch.dist, ch.status.value,
                         ch.hub, ch.last_update, ch.x_a))
        sessions = (
            tuple((b, s.sid, s.start) for b, s in sorted(self._opening.items())),
            tuple((b, s.sid, s.start, s.initiator) for b, s in sorted(self._withdrawing.items())),
            tuple((b, s.sid, s.start, s.initiator) for b, s in sorted(self._closing.items())),
        )
        return digest(encode(tuple(rows), sessions)).hex()


def _sig_of(sigs: Iterable[Signature], signer: AccountId) -> Signature | None:
    for s in sigs:
        if s.signer == signer:
            return s
    return None
