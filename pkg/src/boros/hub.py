"""Channel hub: channel-level ledger, interval-tree commitment, iou transfers, disputes."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from .contract import BadDistribution, Distribution, SignedDistribution
from .core import AccountId, BorosError, Keyring, LedgerState, encode
from .messages import Message, make, sender_signed

if TYPE_CHECKING:
    from .contract import ChannelContract


class HubError(BorosError):
    pass


class UnknownChannel(HubError):
    pass


class MalformedGcc(HubError):
    pass


class NoPendingIou(HubError):
    pass


class LateReceipt(HubError):
    pass


class DuplicateDispute(HubError):
    pass


class NotMember(HubError):
    pass


class UnknownLeaf(HubError):
    pass


# -- Merkle interval tree ----------------------------------------------------

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


@dataclass(frozen=True)
class Leaf:
    alpha: AccountId
    c: int
    u: int
    start: int

    @property
    def end(self) -> int:
        return self.start + self.c

    def encoded(self) -> bytes:
        return encode("leaf", self.alpha, self.c, self.u, self.start, self.end)

    def digest(self) -> bytes:
        return hashlib.sha256(LEAF_PREFIX + self.encoded()).digest()


def _node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


EMPTY_ROOT = hashlib.sha256(b"boros/empty-tree").digest()


class IntervalTree:
    """Binary Merkle tree over (alpha, c, u) leaves in join order.

    Leaf i covers the interval [prefix(i), prefix(i) + c_i). An odd node at
    the end of a level is promoted unchanged to the next level.
    """

    def __init__(self, entries: Iterable[tuple[AccountId, int, int]] = ()):
        self.leaves: list[Leaf] = []
        start = 0
        for alpha, c, u in entries:
            self.leaves.append(Leaf(alpha, c, u, start))
            start += c
        self._digests = [leaf.digest() for leaf in self.leaves]
        self._levels = self._build()

    def _build(self) -> list[list[bytes]]:
        level = self._digests
        levels = [level]
        while len(level) > 1:
            nxt = [_node(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if len(level) % 2:
                nxt.append(level[-1])
            levels.append(nxt)
            level = nxt
        return levels

    @property
    def root(self) -> bytes:
        return self._levels[-1][0] if self.leaves else EMPTY_ROOT

    def _refresh_from(self, i: int) -> None:
        """Re-derive intervals and digests of leaves i.. and rebuild the upper levels."""
        start = self.leaves[i - 1].end if i > 0 else 0
        del self._digests[i:]
        for j in range(i, len(self.leaves)):
            old = self.leaves[j]
            self.leaves[j] = Leaf(old.alpha, old.c, old.u, start)
            start += old.c
            self._digests.append(self.leaves[j].digest())
        self._levels = self._build()

    def append(self, alpha: AccountId, c: int, u: int = 0) -> None:
        start = self.leaves[-1].end if self.leaves else 0
        self.leaves.append(Leaf(alpha, c, u, start))
        self._refresh_from(len(self.leaves) - 1)

    def update(self, alpha: AccountId, c: int, u: int) -> None:
        i = self.index(alpha)
        self.leaves[i] = Leaf(alpha, c, u, self.leaves[i].start)
        self._refresh_from(i)

    def remove(self, alpha: AccountId) -> None:
        i = self.index(alpha)
        del self.leaves[i]
        if i < len(self.leaves):
            self._refresh_from(i)
        else:
            del self._digests[i:]
            self._levels = self._build()

    def index(self, alpha: AccountId) -> int:
        for i, leaf in enumerate(self.leaves):
            if leaf.alpha == alpha:
                return i
        raise UnknownLeaf(str(alpha))

    def leaf(self, alpha: AccountId) -> Leaf:
        return self.leaves[self.index(alpha)]

    def prove(self, alpha: AccountId) -> list[tuple[str, bytes]]:
        i = self.index(alpha)
        proof = []
        for level in self._levels[:-1]:
            sibling = i ^ 1
            if sibling < len(level):
                proof.append(("L" if sibling < i else "R", level[sibling]))
            i //= 2
        return proof


def tree_verify(root: bytes, leaf: Leaf, proof: Iterable[tuple[str, bytes]]) -> bool:
    h = leaf.digest()
    for side, sibling in proof:
        h = _node(sibling, h) if side == "L" else _node(h, sibling)
    return h == root


# -- hub records -------------------------------------------------------------


@dataclass
class Member:
    beta: AccountId
    parties: tuple[AccountId, AccountId]
    capacity: int
    updates: int = 0


@dataclass
class IouRecord:
    sid: bytes
    from_channel: AccountId
    to_channel: AccountId
    delta_x: int
    payer: AccountId
    payee: AccountId
    gcc_ac: Message
    gcc_bd: Message
    created_round: int
    iou: Message


@dataclass(frozen=True)
class Completed:
    sid: bytes
    from_channel: AccountId
    to_channel: AccountId
    delta_x: int
    payer: AccountId
    payee: AccountId


@dataclass
class DisputeRecord:
    beta: AccountId
    sid: bytes
    complainant: AccountId
    respondent: AccountId
    opened_round: int
    deadline: int
    base_version: int
    expected: Distribution
    shift: tuple[AccountId, int] | None = None


def reconcile(theta: Distribution, capacity: int,
              shift: tuple[AccountId, int] | None) -> Distribution | None:
    """Bring ``theta`` in line with a hub capacity, applying a completed transfer if needed.

    Returns None when ``theta`` cannot be reconciled with ``capacity``.
    """
    if theta.total == capacity:
        return theta
    if shift is not None:
        party, delta = shift
        if theta.total + delta == capacity and theta.share(party) + delta >= 0:
            return theta.shifted(party, delta)
    return None


class ChannelHub:
    """Channel hub functionality: members, capacities, transfers and disputes.

    Hub→party messages are signed by the hub and delivered next round.
    """

    def __init__(self, account: AccountId, escrow: AccountId, ledger: LedgerState,
                 keyring: Keyring, delta: int = 2):
        self.account = account
        self.escrow = escrow
        self.ledger = ledger
        self.keyring = keyring
        self.delta = delta
        self.contract: ChannelContract | None = None
        self.members: dict[AccountId, Member] = {}
        self.order: list[AccountId] = []
        self.pending: dict[bytes, IouRecord] = {}
        self.completed: dict[bytes, Completed] = {}
        self.burned: set[bytes] = set()
        self.disputes: dict[AccountId, DisputeRecord] = {}
        self.tree = IntervalTree()
        self.history: list[tuple[int, str, AccountId, bytes]] = []  # dispute events
        keyring.register(account)
        ledger.accounts.setdefault(escrow, 0)

    # -- helpers -------------------------------------------------------------

    def _msg(self, kind: str, sid: bytes, to: AccountId, **body) -> Message:
        return make(self.keyring, kind, sid, self.account, to, **body)

    def _entries(self) -> list[tuple[AccountId, int, int]]:
        return [(b, self.members[b].capacity, self.members[b].updates) for b in self.order]

    def member(self, beta: AccountId) -> Member:
        m = self.members.get(beta)
        if m is None:
            raise UnknownChannel(str(beta))
        return m

    def capacity(self, beta: AccountId) -> int | None:
        m = self.members.get(beta)
        return None if m is None else m.capacity

    def update_count(self, beta: AccountId) -> int:
        m = self.members.get(beta)
        return 0 if m is None else m.updates

    def total_capacity(self) -> int:
        return sum(m.capacity for m in self.members.values())

    def tree_commit(self) -> str:
        return self.tree.root.hex()

    def tree_prove(self, beta: AccountId) -> list[tuple[str, bytes]]:
        return self.tree.prove(beta)

    def recompute_commit(self) -> str:
        """From-scratch commitment over the current members, for invariant checks."""
        return IntervalTree(self._entries()).root.hex()

    def certify(self, beta: AccountId, theta: Distribution, sigs=()) -> SignedDistribution:
        cert = self.keyring.sign(self.account, theta.cert_payload(beta))
        return SignedDistribution(beta, theta, tuple(sigs) + (cert,))

    # -- join / withdraw -----------------------------------------------------

    def hub_join(self, sid: bytes, beta: AccountId, c: int, refund_to: AccountId,
                 parties: tuple[AccountId, AccountId]) -> bool:
        """Admit ``beta`` with capacity ``c``; the c coins already sit in hub escrow."""
        if beta in self.members:
            self.ledger.transfer(sid, self.escrow, refund_to, c)
            return False
        self.members[beta] = Member(beta, tuple(parties), c)
        self.order.append(beta)
        self.tree.append(beta, c, 0)
        return True

    def hub_withdraw(self, sid: bytes, beta: AccountId, c: int, refund_to: AccountId) -> bool:
        m = self.member(beta)
        if m.capacity != c or beta in self.disputes:
            return False
        if any(rec.from_channel == beta or rec.to_channel == beta for rec in self.pending.values()):
            return False
        self.ledger.transfer(sid, self.escrow, refund_to, c)
        del self.members[beta]
        self.order.remove(beta)
        self.tree.remove(beta)
        return True

    # -- capacity transfer ---------------------------------------------------

    def _check_gcc(self, gcc: Message, sid: bytes, beta_ac: AccountId, beta_bd: AccountId,
                   dx: int, granter: AccountId) -> None:
        if not isinstance(gcc, Message) or gcc.kind != "gcc":
            raise MalformedGcc("missing gcc")
        expected = {"beta_ac": beta_ac, "beta_bd": beta_bd, "dx": dx, "hub": self.account}
        if gcc.sid != sid or any(gcc.get(k) != v for k, v in expected.items()):
            raise MalformedGcc(f"gcc from {gcc.sender} disagrees with the iou")
        if gcc.sender != granter or not sender_signed(self.keyring, gcc):
            raise MalformedGcc(f"gcc not signed by {granter}")

    def hub_iou(self, msg: Message, round_: int) -> list[Message]:
        sid, payer = msg.sid, msg.sender
        beta_ac, beta_bd, dx = msg["beta_ac"], msg["beta_bd"], msg["dx"]
        ac, bd = self.member(beta_ac), self.member(beta_bd)
        if beta_ac == beta_bd:
            raise MalformedGcc("iou between a channel and itself")
        if payer not in ac.parties:
            raise NotMember(f"{payer} is not a party of {beta_ac}")
        if not sender_signed(self.keyring, msg):
            raise MalformedGcc("iou not signed by its sender")
        gcc_ac, gcc_bd = msg["gcc_ac"], msg["gcc_bd"]
        granter_ac = ac.parties[1] if ac.parties[0] == payer else ac.parties[0]
        self._check_gcc(gcc_ac, sid, beta_ac, beta_bd, dx, granter_ac)
        if gcc_bd.sender not in bd.parties:
            raise MalformedGcc(f"gcc granter {gcc_bd.sender} is not a party of {beta_bd}")
        self._check_gcc(gcc_bd, sid, beta_ac, beta_bd, dx, gcc_bd.sender)
        payee = bd.parties[1] if bd.parties[0] == gcc_bd.sender else bd.parties[0]
        if (sid in self.pending or sid in self.completed or sid in self.burned
                or beta_ac in self.disputes or beta_bd in self.disputes
                or not isinstance(dx, int) or dx < 1 or dx > ac.capacity):
            return [self._msg("transfer-failed", sid, payer, beta_ac=beta_ac, beta_bd=beta_bd)]
        self.pending[sid] = IouRecord(sid, beta_ac, beta_bd, dx, payer, payee, gcc_ac, gcc_bd,
                                      round_, msg)
        return [self._msg("iou-notify", sid, payee, iou=msg)]

    def hub_receipt(self, msg: Message, round_: int) -> list[Message]:
        rec = self.pending.get(msg.sid)
        if rec is None:
            raise NoPendingIou(msg.sid.decode(errors="replace"))
        if msg.sender != rec.payee or not sender_signed(self.keyring, msg):
            raise NoPendingIou("receipt not signed by the payee")
        if (msg.get("beta_ac"), msg.get("beta_bd"), msg.get("dx")) != (
                rec.from_channel, rec.to_channel, rec.delta_x):
            raise NoPendingIou("receipt disagrees with the iou")
        if round_ != rec.created_round + 1:
            raise LateReceipt(msg.sid.decode(errors="replace"))
        del self.pending[rec.sid]
        ac, bd = self.members[rec.from_channel], self.members[rec.to_channel]
        ac.capacity -= rec.delta_x
        bd.capacity += rec.delta_x
        ac.updates += 1
        bd.updates += 1
        self.tree.update(ac.beta, ac.capacity, ac.updates)
        self.tree.update(bd.beta, bd.capacity, bd.updates)
        self.completed[rec.sid] = Completed(rec.sid, rec.from_channel, rec.to_channel,
                                            rec.delta_x, rec.payer, rec.payee)
        body = dict(beta_ac=rec.from_channel, beta_bd=rec.to_channel, dx=rec.delta_x,
                    hub=self.account, gcc_ac=rec.gcc_ac, gcc_bd=rec.gcc_bd)
        return [self._msg("transferred", rec.sid, p, **body) for p in (rec.payer, rec.payee)]

    def _fail_pending(self, rec: IouRecord) -> list[Message]:
        del self.pending[rec.sid]
        return [self._msg("transfer-failed", rec.sid, p, beta_ac=rec.from_channel,
                          beta_bd=rec.to_channel) for p in (rec.payer, rec.payee)]

    # -- disputes ------------------------------------------------------------

    def shift_for(self, sid: bytes, beta: AccountId) -> tuple[AccountId, int] | None:
        done = self.completed.get(sid)
        if done is None:
            return None
        if done.from_channel == beta:
            return (done.payer, -done.delta_x)
        if done.to_channel == beta:
            return (done.payee, done.delta_x)
        return None

    def hub_force_reply(self, msg: Message, round_: int) -> list[Message]:
        beta, complainant = msg["beta"], msg.sender
        m = self.members.get(beta)
        if m is None or complainant not in m.parties:
            raise NotMember(f"{complainant} cannot complain about {beta}")
        if beta in self.disputes:
            raise DuplicateDispute(str(beta))
        if not sender_signed(self.keyring, msg):
            raise NotMember("force-reply request not signed by its sender")
        evidence: SignedDistribution = msg["evidence"]
        if evidence.beta != beta or not evidence.valid(self.keyring, m.parties, (self.account,)):
            raise BadDistribution("complaint evidence is not signed by both parties")
        shift = self.shift_for(msg.sid, beta)
        expected = reconcile(evidence.theta, m.capacity, shift)
        if expected is None:
            raise BadDistribution("complaint evidence does not match the hub capacity")
        out: list[Message] = []
        self.burned.add(msg.sid)
        for rec in [r for r in self.pending.values() if beta in (r.from_channel, r.to_channel)]:
            out += self._fail_pending(rec)  # capacity is frozen while the dispute runs
        respondent = m.parties[1] if m.parties[0] == complainant else m.parties[0]
        self.history.append((round_, "opened", beta, msg.sid))
        self.disputes[beta] = DisputeRecord(beta, msg.sid, complainant, respondent, round_,
                                            round_ + self.delta, evidence.theta.version,
                                            expected, shift)
        out.append(self._msg("fr-notify", msg.sid, respondent, beta=beta, theta=expected,
                             base_version=evidence.theta.version, capacity=m.capacity,
                             shift=shift, deadline=round_ + self.delta))
        return out

    def _valid_reply(self, d: DisputeRecord, msg: Message) -> Distribution | None:
        if msg.sender != d.respondent or not sender_signed(self.keyring, msg):
            return None
        theta: Distribution = msg["theta"]
        if theta == d.expected:
            return theta
        base: SignedDistribution | None = msg.get("evidence")
        if base is None or base.beta != d.beta or base.theta.version <= d.base_version:
            return None
        if not base.valid(self.keyring, self.members[d.beta].parties, (self.account,)):
            return None
        if reconcile(base.theta, self.members[d.beta].capacity, d.shift) != theta:
            return None
        return theta

    def hub_resolve_dispute(self, beta: AccountId, reply: Message | None,
                            round_: int) -> list[Message]:
        d = self.disputes.get(beta)
        if d is None:
            return []
        if reply is not None:
            theta = self._valid_reply(d, reply)
            if theta is None or round_ > d.deadline:
                return []
            del self.disputes[beta]
            self.history.append((round_, "resolved", beta, d.sid))
            signed = self.certify(beta, theta, reply.sigs)
            return [self._msg("fr-resolved", d.sid, p, beta=beta, evidence=signed)
                    for p in (d.complainant, d.respondent)]
        if round_ < d.deadline:
            return []
        return self.hub_force_close(d, round_)

    def hub_force_close(self, d: DisputeRecord, round_: int) -> list[Message]:
        del self.disputes[d.beta]
        self.history.append((round_, "force-closed", d.beta, d.sid))
        theta = d.expected
        for party, amount in theta.shares:
            if amount:
                self.ledger.transfer(d.sid, self.escrow, party, amount)
        del self.members[d.beta]
        self.order.remove(d.beta)
        self.tree.remove(d.beta)
        if self.contract is not None:
            self.contract.force_closed(d.beta, theta)
        signed = self.certify(d.beta, theta)
        return [self._msg("force-closed", d.sid, p, beta=d.beta, evidence=signed)
                for p in (d.complainant, d.respondent)]

    # -- scheduler hooks -----------------------------------------------------

    def handle(self, msg: Message, round_: int) -> list[Message]:
        if msg.kind == "iou":
            return self.hub_iou(msg, round_)
        if msg.kind == "receipt":
            return self.hub_receipt(msg, round_)
        if msg.kind == "fr":
            return self.hub_force_reply(msg, round_)
        if msg.kind == "fr-reply":
            return self.hub_resolve_dispute(msg["beta"], msg, round_)
        raise HubError(f"hub does not accept {msg.kind!r}")

    def end_round(self, round_: int) -> list[Message]:
        out: list[Message] = []
        for sid in sorted(self.pending):
            rec = self.pending[sid]
            if round_ >= rec.created_round + 1:
                out += self._fail_pending(rec)
        for beta in sorted(self.disputes):
            out += self.hub_resolve_dispute(beta, None, round_)
        return out

    def snapshot(self) -> dict:
        return {
            "members": {str(b): self.members[b].capacity for b in self.order},
            "root": self.tree_commit(),
            "pending": len(self.pending),
            "disputes": sorted(str(b) for b in self.disputes),
        }
