"""Party state machines for the Boros protocol.

A :class:`Party` consumes environment inputs and delivered messages once per
round and leaves outgoing messages in its outbox. Messages addressed to the
contract or a hub are processed by the scheduler in the same round; messages
to other parties arrive at the start of the next one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .contract import Distribution, SignedDistribution
from .core import AccountId, BorosError, Keyring
from .hub import reconcile
from .messages import Message, make, sender_signed


class EngineError(BorosError):
    pass


class BusyWithTransfer(EngineError):
    pass


class WrongChannelState(EngineError):
    pass


class Phase(enum.IntEnum):
    PREPARE = 0
    CAPACITY_TRANSFER = 1
    IN_CHANNEL_UPDATE = 2
    DONE = 3
    ABORTED = 4


@dataclass
class ChannelView:
    beta: AccountId
    me: AccountId
    other: AccountId
    capacity: int
    theta: Distribution
    evidence: SignedDistribution  # latest dual-signed, certified or on-chain distribution
    status: str = "open"  # open | joined | closed
    hub: AccountId | None = None


@dataclass
class Transfer:
    sid: bytes
    role: str  # "A", "B", "C" or "D"
    beta_ac: AccountId
    beta_bd: AccountId
    dx: int
    hub: AccountId
    started: int
    deadline: int
    phase: Phase = Phase.PREPARE
    gccs: dict[str, Message] = field(default_factory=dict)
    granted: bool = False
    m_ct: Message | None = None
    ct_round: int | None = None
    proposal: Distribution | None = None
    icu_sig: Any = None
    fr_sent: bool = False
    settled: bool = False  # outcome fixed by a dispute or by Done

    @property
    def own_channel(self) -> AccountId:
        return self.beta_ac if self.role in ("A", "C") else self.beta_bd

    def advance(self, phase: Phase) -> None:
        """Move forward; an aborted transfer may still complete late, nothing else goes back."""
        if phase is self.phase:
            return
        ok = {
            Phase.PREPARE: phase is not Phase.PREPARE,
            Phase.CAPACITY_TRANSFER: phase > Phase.CAPACITY_TRANSFER,
            Phase.IN_CHANNEL_UPDATE: phase > Phase.IN_CHANNEL_UPDATE,
            Phase.DONE: False,
            Phase.ABORTED: phase is Phase.DONE,
        }[self.phase]
        if not ok:
            raise EngineError(f"phase regression {self.phase.name} -> {phase.name}")
        self.phase = phase


@dataclass
class Session:
    sid: bytes
    kind: str
    beta: AccountId
    initiator: bool
    started: int
    params: dict = field(default_factory=dict)
    done: bool = False


Approver = Callable[[AccountId, bytes, str], bool]


class Party:
    """One channel participant running the honest protocol."""

    def __init__(self, account: AccountId, keyring: Keyring, contract_id: AccountId,
                 directory: Callable[[AccountId], tuple[AccountId, AccountId] | None],
                 approve: Approver | None = None, T: int = 10, delta: int = 2):
        self.id = account
        self.keyring = keyring
        self.contract_id = contract_id
        self.directory = directory
        self.approve = approve or (lambda who, sid, kind: True)
        self.T = T
        self.delta = delta
        self.channels: dict[AccountId, ChannelView] = {}
        self.sessions: dict[bytes, Session] = {}
        self.transfers: dict[bytes, Transfer] = {}
        self.disputes: dict[AccountId, int] = {}  # channel -> reply deadline of its dispute
        self.blocklist: set[AccountId] = set()
        self.outbox: list[Message] = []
        self.outputs: list[tuple[int, str, bytes, dict]] = []
        self.rejected: list[tuple[int, str, str]] = []
        self.history: list[SignedDistribution] = []  # every distribution this party held
        self.round = 0

    # -- plumbing ------------------------------------------------------------

    def send(self, kind: str, sid: bytes, to: AccountId, extra_sigs=(), **body) -> Message:
        msg = make(self.keyring, kind, sid, self.id, to, extra_sigs=tuple(extra_sigs), **body)
        self.outbox.append(msg)
        return msg

    def output(self, kind: str, sid: bytes, **info) -> None:
        self.outputs.append((self.round, kind, sid, info))

    def reject(self, msg_or_kind, reason: str) -> None:
        kind = msg_or_kind.kind if isinstance(msg_or_kind, Message) else str(msg_or_kind)
        self.rejected.append((self.round, kind, reason))

    def view(self, beta: AccountId) -> ChannelView | None:
        return self.channels.get(beta)

    def active_transfer(self) -> Transfer | None:
        for t in self.transfers.values():
            if not t.settled:
                return t
        return None

    def busy_channels(self) -> set[AccountId]:
        busy = {s.beta for s in self.sessions.values() if not s.done}
        for t in self.transfers.values():
            if not t.settled:
                busy.update((t.beta_ac, t.beta_bd))
        busy.update(self.disputes)
        return busy

    def install(self, view: ChannelView) -> None:
        self.channels[view.beta] = view
        self.history.append(view.evidence)

    def _from_counterparty(self, msg: Message, beta: AccountId) -> ChannelView | None:
        ch = self.channels.get(beta)
        if ch is None or msg.sender != ch.other or ch.status == "closed":
            return None
        if msg.sender in self.blocklist or not sender_signed(self.keyring, msg):
            return None
        return ch

    # -- round driver --------------------------------------------------------

    def step(self, round_: int, inbox: list[Message], inputs: list[dict]) -> list[Message]:
        self.round = round_
        self.outbox = []
        for msg in inbox:
            handler = getattr(self, "on_" + msg.kind.replace("-", "_"), None)
            if handler is None:
                self.reject(msg, "unexpected message")
                continue
            try:
                handler(msg)
            except (BorosError, KeyError, TypeError, ValueError, AttributeError) as exc:
                self.reject(msg, f"{type(exc).__name__}: {exc}")
        for inp in inputs:
            try:
                getattr(self, "input_" + inp["kind"].replace("-", "_"))(inp)
            except (BorosError, KeyError, TypeError, ValueError) as exc:
                self.reject(inp["kind"], f"{type(exc).__name__}: {exc}")
        self._timers()
        return self.outbox

    def _timers(self) -> None:
        r = self.round
        for s in list(self.sessions.values()):
            if s.done:
                continue
            k = r - s.started + 1  # round number relative to the session start
            if s.kind == "open" and not s.initiator and k >= 2 and not s.params.get("seen"):
                self._finish(s, "open-failed")
            elif s.kind == "update" and s.initiator and k >= 3:
                s.done = True
            elif s.kind == "join" and s.initiator and k >= 3:
                self._finish(s, "join-failed")
            elif s.kind == "withdraw" and not s.initiator and k >= 2 and not s.params.get("seen"):
                self._finish(s, "withdraw-failed")
            elif s.kind == "close" and not s.initiator and k >= 2 and not s.params.get("seen"):
                self._finish(s, "close-failed")
            elif k >= 4 and s.kind in ("open", "withdraw", "close", "join"):
                s.done = True
        for t in list(self.transfers.values()):
            self._transfer_timers(t)
        for beta, deadline in list(self.disputes.items()):
            if r > deadline + 1:  # the hub never settled it, so it never existed
                del self.disputes[beta]

    def _finish(self, s: Session, outcome: str, **info) -> None:
        if not s.done:
            s.done = True
            self.output(outcome, s.sid, **info)

    def _session(self, msg: Message, kind: str, beta: AccountId) -> Session:
        s = self.sessions.get(msg.sid)
        if s is None:
            s = Session(msg.sid, kind, beta, False, self.round - 1)
            self.sessions[msg.sid] = s
        return s

    # -- open ----------------------------------------------------------------

    def input_open(self, inp: Mapping) -> None:
        sid, beta = inp["sid"], inp["beta"]
        if sid in self.sessions or beta in self.channels:
            raise WrongChannelState(f"{beta} already known")
        s = Session(sid, "open", beta, inp["initiator"], self.round, {"x": inp["x"]})
        self.sessions[sid] = s
        if s.initiator:
            self.send("open", sid, self.contract_id, beta=beta, counterparty=inp["counterparty"],
                      x=inp["x"])

    def on_opening(self, msg: Message) -> None:
        s = self._session(msg, "open", msg["beta"])
        s.params["seen"] = True
        if not s.initiator and "x" in s.params and self.approve(self.id, msg.sid, "open"):
            self.send("open", msg.sid, self.contract_id, beta=msg["beta"], x=s.params["x"])

    def on_opened(self, msg: Message) -> None:
        if msg.sender != self.contract_id:
            return
        beta, theta = msg["beta"], msg["theta"]
        other = next(p for p in theta.parties if p != self.id)
        self.channels[beta] = ChannelView(beta, self.id, other, msg["c"], theta,
                                          SignedDistribution(beta, theta))
        self._finish(self._session(msg, "open", beta), "opened", c=msg["c"])

    def on_open_failed(self, msg: Message) -> None:
        if msg.sender == self.contract_id:
            self._finish(self._session(msg, "open", msg["beta"]), "open-failed")

    # -- in-channel transfer -------------------------------------------------

    def input_update(self, inp: Mapping) -> None:
        sid, beta = inp["sid"], inp["beta"]
        ch = self.channels.get(beta)
        if ch is None or ch.status == "closed":
            raise WrongChannelState(f"{beta} is not usable")
        if beta in self.busy_channels() or ch.other in self.blocklist:
            raise BusyWithTransfer(str(beta))
        theta = Distribution.of(ch.theta.version + 1, inp["shares"])
        self.sessions[sid] = Session(sid, "update", beta, True, self.round, {"theta": theta})
        self.send("updating", sid, ch.other, beta=beta, theta=theta)

    def on_updating(self, msg: Message) -> None:
        beta, theta = msg["beta"], msg["theta"]
        ch = self._from_counterparty(msg, beta)
        if ch is None or beta in self.busy_channels():
            return self.reject(msg, "not acceptable now")
        if theta.version != ch.theta.version + 1 or set(theta.parties) != {ch.me, ch.other}:
            return self.reject(msg, "stale version")
        if theta.total != ch.capacity:
            return self.reject(msg, "capacity sum mismatch")
        if not self.approve(self.id, msg.sid, "update"):
            return
        mine = self.send("update-ok", msg.sid, ch.other, beta=beta, theta=theta)
        self._adopt(ch, theta, msg.sigs + mine.sigs)
        self.sessions[msg.sid] = Session(msg.sid, "update", beta, False, self.round - 1, done=True)
        self.output("updated", msg.sid, w=theta.version)

    def on_update_ok(self, msg: Message) -> None:
        s = self.sessions.get(msg.sid)
        if s is None or s.kind != "update" or s.done:
            return
        ch = self._from_counterparty(msg, s.beta)
        if ch is None or msg["theta"] != s.params["theta"]:
            return self.reject(msg, "update-ok does not match")
        mine = self.keyring.sign(self.id, s.params["theta"].payload(s.beta))
        self._adopt(ch, s.params["theta"], msg.sigs + (mine,))
        self._finish(s, "updated", w=s.params["theta"].version)

    def _adopt(self, ch: ChannelView, theta: Distribution, sigs) -> None:
        ev = SignedDistribution(ch.beta, theta, tuple(sigs))
        ch.theta = theta
        ch.capacity = theta.total
        ch.evidence = ev
        self.history.append(ev)

    # -- join ----------------------------------------------------------------

    def input_join(self, inp: Mapping) -> None:
        sid, beta, hub = inp["sid"], inp["beta"], inp["hub"]
        ch = self.channels.get(beta)
        if ch is None or ch.status != "open":
            raise WrongChannelState(f"{beta} cannot join")  # already joined: ignored
        if beta in self.busy_channels():
            raise BusyWithTransfer(str(beta))
        self.sessions[sid] = Session(sid, "join", beta, True, self.round)
        self.send("join-req", sid, ch.other, beta=beta, hub=hub, c=ch.capacity, theta=ch.theta)

    def on_join_req(self, msg: Message) -> None:
        beta = msg["beta"]
        ch = self._from_counterparty(msg, beta)
        if ch is None or ch.status != "open" or beta in self.busy_channels():
            return self.reject(msg, "join not acceptable")
        if msg["c"] != ch.capacity or msg["theta"] != ch.theta:
            return self.reject(msg, "join names a different channel state")
        s = Session(msg.sid, "join", beta, False, self.round - 1)
        self.sessions[msg.sid] = s
        if not self.approve(self.id, msg.sid, "join"):
            return self._finish(s, "join-failed")
        self.send("join", msg.sid, self.contract_id, extra_sigs=msg.sigs, beta=beta,
                  hub=msg["hub"], c=msg["c"], theta=msg["theta"])

    def on_joined(self, msg: Message) -> None:
        ch = self.channels.get(msg["beta"])
        if msg.sender != self.contract_id or ch is None:
            return
        ch.status, ch.hub = "joined", msg["hub"]
        if msg.get("evidence") is not None and msg["theta"] == ch.theta:
            ch.evidence = msg["evidence"]
        s = self.sessions.get(msg.sid)
        if s is not None:
            self._finish(s, "joined", hub=str(msg["hub"]))

    def on_join_failed(self, msg: Message) -> None:
        s = self.sessions.get(msg.sid)
        if msg.sender == self.contract_id and s is not None:
            self._finish(s, "join-failed")

    # -- cross-channel transfer ----------------------------------------------

    def input_cc_transfer(self, inp: Mapping) -> None:
        sid, beta_ac, beta_bd, dx, hub = (inp["sid"], inp["beta_ac"], inp["beta_bd"], inp["dx"],
                                          inp["hub"])
        if self.active_transfer() is not None:
            raise BusyWithTransfer(self.id.label)
        if beta_ac in self.channels:
            role, beta = "A", beta_ac
        elif beta_bd in self.channels:
            role, beta = "B", beta_bd
        else:
            raise WrongChannelState("not a party of either channel")
        ch = self.channels[beta]
        if ch.status != "joined" or ch.hub != hub or beta in self.busy_channels():
            raise WrongChannelState(f"{beta} is not joined to {hub}")
        if ch.other in self.blocklist or beta_ac == beta_bd or dx < 1:
            raise WrongChannelState("transfer refused")
        if role == "A" and dx > ch.theta.share(self.id):
            return  # the input is ignored
        self.transfers[sid] = Transfer(sid, role, beta_ac, beta_bd, dx, hub, self.round,
                                       self.round + self.T)
        self.send("pcc", sid, ch.other, beta_ac=beta_ac, beta_bd=beta_bd, dx=dx, hub=hub)

    def on_pcc(self, msg: Message) -> None:
        beta_ac, beta_bd, dx, hub = msg["beta_ac"], msg["beta_bd"], msg["dx"], msg["hub"]
        if beta_ac == beta_bd or not isinstance(dx, int) or dx < 1:
            return self.reject(msg, "malformed pcc")
        role = "C" if beta_ac in self.channels and self.channels[beta_ac].other == msg.sender \
            else "D"
        beta = beta_ac if role == "C" else beta_bd
        ch = self._from_counterparty(msg, beta)
        if ch is None or ch.status != "joined" or ch.hub != hub:
            return self.reject(msg, "pcc on a channel not in that hub")
        if msg.sid in self.transfers or self.active_transfer() is not None:
            return self.reject(msg, "busy with another transfer")
        if role == "C" and dx > ch.theta.share(ch.other):
            return self.reject(msg, "insufficient initiator balance")
        if self.directory(beta_ac) is None or self.directory(beta_bd) is None:
            return self.reject(msg, "unknown channel")
        t = Transfer(msg.sid, role, beta_ac, beta_bd, dx, hub, self.round - 1,
                     self.round - 1 + self.T)
        self.transfers[msg.sid] = t
        if not self.approve(self.id, msg.sid, "gcc"):
            t.advance(Phase.ABORTED)
            t.settled = True
            self.output("transfer-failed", msg.sid)
            return
        t.granted = True
        peers = {ch.other} | set(self.directory(beta_bd if role == "C" else beta_ac))
        gcc = None
        for peer in sorted(peers):
            gcc = self.send("gcc", msg.sid, peer, beta_ac=beta_ac, beta_bd=beta_bd, dx=dx, hub=hub)
        t.gccs[beta] = gcc

    def _gcc_ok(self, t: Transfer, gcc: Message) -> str | None:
        """Which channel's grant ``gcc`` is, or None if it does not fit ``t``."""
        want = {"beta_ac": t.beta_ac, "beta_bd": t.beta_bd, "dx": t.dx, "hub": t.hub}
        if not isinstance(gcc, Message) or gcc.kind != "gcc" or gcc.sid != t.sid:
            return None
        if any(gcc.get(k) != v for k, v in want.items()) or not sender_signed(self.keyring, gcc):
            return None
        for beta in (t.beta_ac, t.beta_bd):
            parties = self.directory(beta)
            if parties is None or gcc.sender not in parties:
                continue
            ch = self.channels.get(beta)
            if ch is not None and gcc.sender != ch.other and gcc.sender != self.id:
                continue
            return beta
        return None

    def on_gcc(self, msg: Message) -> None:
        t = self.transfers.get(msg.sid)
        if t is None or t.phase is not Phase.PREPARE:
            return
        beta = self._gcc_ok(t, msg)
        if beta is None:
            return self.reject(msg, "gcc does not match the transfer")
        if beta == t.own_channel and msg.sender == self.id:
            return
        t.gccs.setdefault(beta, msg)

    def _transfer_timers(self, t: Transfer) -> None:
        k = self.round - t.started + 1
        if t.phase is Phase.PREPARE and k >= 3:
            if t.role == "B":
                if k >= 4:
                    self._abort(t)
            elif len(t.gccs) == 2:
                t.advance(Phase.CAPACITY_TRANSFER)
                if t.role == "A":
                    self.send("iou", t.sid, t.hub, beta_ac=t.beta_ac, beta_bd=t.beta_bd,
                              dx=t.dx, hub=t.hub, gcc_ac=t.gccs[t.beta_ac],
                              gcc_bd=t.gccs[t.beta_bd])
            else:
                self._abort(t)
        if t.phase is Phase.CAPACITY_TRANSFER and t.role in ("A", "B") and k >= 5 \
                and t.m_ct is None:
            self._abort(t)
        if t.m_ct is not None and t.ct_round is not None and self.round == t.ct_round + 1 \
                and t.role in ("A", "B") and t.phase is Phase.IN_CHANNEL_UPDATE:
            ch = self.channels[t.own_channel]
            icu = self.send("icu", t.sid, ch.other, beta=ch.beta, m_ct=t.m_ct, theta=t.proposal)
            t.icu_sig = icu.sigs[0]
        if t.role in ("C", "D") and t.phase is Phase.CAPACITY_TRANSFER and k >= 7:
            self._abort(t)
        if t.role in ("A", "B") and t.phase is Phase.IN_CHANNEL_UPDATE and k >= 8:
            self._abort(t)
        if not t.settled and not t.fr_sent and self.round >= t.deadline:
            self._force_reply(t)
        elif t.fr_sent and not t.settled and t.own_channel not in self.disputes \
                and self.round > t.deadline + self.delta + 1:
            t.settled = True  # the complaint was refused and no dispute is pending

    def _abort(self, t: Transfer) -> None:
        if t.phase not in (Phase.DONE, Phase.ABORTED):
            t.advance(Phase.ABORTED)
            self.output("transfer-failed", t.sid)

    def _force_reply(self, t: Transfer) -> None:
        t.fr_sent = True
        ch = self.channels.get(t.own_channel)
        if ch is None or ch.status != "joined" or ch.beta in self.disputes:
            if ch is None or ch.status != "joined":
                t.settled = True
            return
        self.send("fr", t.sid, ch.hub, beta=ch.beta, evidence=ch.evidence)

    def on_iou_notify(self, msg: Message) -> None:
        iou = msg["iou"]
        t = self.transfers.get(msg.sid)
        if t is None or t.role != "B" or t.phase is not Phase.PREPARE:
            return
        ch = self.channels[t.beta_bd]
        if msg.sender != ch.hub or not sender_signed(self.keyring, msg):
            return self.reject(msg, "notification not from the hub")
        if not isinstance(iou, Message) or iou.sid != t.sid or not sender_signed(self.keyring, iou):
            return self.reject(msg, "invalid iou")
        if (iou.get("beta_ac"), iou.get("beta_bd"), iou.get("dx")) != (t.beta_ac, t.beta_bd, t.dx):
            return self.reject(msg, "iou disagrees with the transfer")
        parties_ac = self.directory(t.beta_ac) or ()
        if iou.sender not in parties_ac:
            return self.reject(msg, "iou not from a party of the paying channel")
        gcc_ac, gcc_bd = iou.get("gcc_ac"), iou.get("gcc_bd")
        if self._gcc_ok(t, gcc_ac) != t.beta_ac or gcc_ac.sender == iou.sender:
            return self.reject(msg, "bad gcc for the paying channel")
        if self._gcc_ok(t, gcc_bd) != t.beta_bd or gcc_bd.sender != ch.other:
            return self.reject(msg, "bad gcc for the receiving channel")
        t.gccs = {t.beta_ac: gcc_ac, t.beta_bd: gcc_bd}
        t.advance(Phase.CAPACITY_TRANSFER)
        self.send("receipt", t.sid, ch.hub, beta_ac=t.beta_ac, beta_bd=t.beta_bd, dx=t.dx,
                  hub=t.hub, gcc_ac=gcc_ac, gcc_bd=gcc_bd)

    def _valid_ct(self, t: Transfer, m_ct: Any) -> bool:
        if not isinstance(m_ct, Message) or m_ct.kind != "transferred" or m_ct.sid != t.sid:
            return False
        if m_ct.sender != t.hub or not sender_signed(self.keyring, m_ct):
            return False
        return (m_ct.get("beta_ac"), m_ct.get("beta_bd"), m_ct.get("dx")) == (
            t.beta_ac, t.beta_bd, t.dx)

    def _next_theta(self, t: Transfer, ch: ChannelView) -> Distribution:
        if t.role in ("A", "C"):
            payer = self.id if t.role == "A" else ch.other
            return ch.theta.shifted(payer, -t.dx)
        payee = self.id if t.role == "B" else ch.other
        return ch.theta.shifted(payee, t.dx)

    def on_transferred(self, msg: Message) -> None:
        t = self.transfers.get(msg.sid)
        if t is None or t.role not in ("A", "B") or t.phase is not Phase.CAPACITY_TRANSFER:
            return
        if not self._valid_ct(t, msg):
            return self.reject(msg, "invalid transfer confirmation")
        ch = self.channels[t.own_channel]
        t.m_ct, t.ct_round = msg, self.round
        t.proposal = self._next_theta(t, ch)
        ch.capacity = t.proposal.total
        t.advance(Phase.IN_CHANNEL_UPDATE)

    def on_transfer_failed(self, msg: Message) -> None:
        t = self.transfers.get(msg.sid)
        ch = self.channels.get(t.own_channel) if t else None
        if t is None or ch is None or msg.sender != ch.hub:
            return
        if t.phase is Phase.CAPACITY_TRANSFER and t.m_ct is None:
            self._abort(t)

    def on_icu(self, msg: Message) -> None:
        t = self.transfers.get(msg.sid)
        if t is None or t.role not in ("C", "D") or t.settled:
            return
        ch = self._from_counterparty(msg, msg["beta"])
        if ch is None or ch.beta != t.own_channel or not t.granted:
            return self.reject(msg, "icu from outside the transfer")
        if not self._valid_ct(t, msg["m_ct"]):
            return self.reject(msg, "icu carries an invalid transfer confirmation")
        expected = self._next_theta(t, ch)
        if msg["theta"] != expected:
            self.blocklist.add(ch.other)
            return self.reject(msg, "inconsistent icu")
        t.m_ct = msg["m_ct"]
        if t.phase is Phase.PREPARE:
            t.advance(Phase.CAPACITY_TRANSFER)
        if t.phase is not Phase.ABORTED:
            t.advance(Phase.IN_CHANNEL_UPDATE)
        if not self.approve(self.id, msg.sid, "conf"):
            return
        conf = self.send("conf", t.sid, ch.other, beta=ch.beta, m_ct=t.m_ct, theta=expected)
        self._adopt(ch, expected, msg.sigs + conf.sigs)
        t.advance(Phase.DONE)
        t.settled = True
        self.output("cc-transferred", t.sid)

    def on_conf(self, msg: Message) -> None:
        t = self.transfers.get(msg.sid)
        if t is None or t.role not in ("A", "B") or t.phase is not Phase.IN_CHANNEL_UPDATE:
            return
        ch = self._from_counterparty(msg, msg["beta"])
        if ch is None or ch.beta != t.own_channel or msg["theta"] != t.proposal:
            return self.reject(msg, "conf does not match")
        mine = self.keyring.sign(self.id, t.proposal.payload(ch.beta))
        self._adopt(ch, t.proposal, msg.sigs + (mine,))
        t.advance(Phase.DONE)
        t.settled = True
        self.output("cc-transferred", t.sid)

    # -- disputes ------------------------------------------------------------

    def on_fr_notify(self, msg: Message) -> None:
        beta = msg["beta"]
        ch = self.channels.get(beta)
        if ch is None or msg.sender != ch.hub or not sender_signed(self.keyring, msg):
            return
        self.disputes[beta] = msg["deadline"]
        if ch.evidence.theta.version <= msg["base_version"]:
            # the complaint rests on a distribution we signed ourselves
            self.send("fr-reply", msg.sid, ch.hub, beta=beta, theta=msg["theta"])
            return
        mine = reconcile(ch.evidence.theta, msg["capacity"], msg["shift"])
        if mine is None:
            return self.reject(msg, "cannot reconcile with the hub capacity")
        self.send("fr-reply", msg.sid, ch.hub, beta=beta, theta=mine, evidence=ch.evidence)

    def _dispute_over(self, msg: Message) -> ChannelView | None:
        beta = msg["beta"]
        ch = self.channels.get(beta)
        if ch is None or msg.sender != ch.hub or not sender_signed(self.keyring, msg):
            return None
        ev: SignedDistribution = msg["evidence"]
        if not ev.certified_by(self.keyring, (ch.hub,)):
            return None
        self.disputes.pop(beta, None)
        t = self.transfers.get(msg.sid)  # only the transfer the complaint was about
        if t is not None and t.own_channel == beta and not t.settled:
            if t.phase not in (Phase.DONE, Phase.ABORTED):
                t.advance(Phase.ABORTED)
            t.settled = True
        return ch

    def on_fr_resolved(self, msg: Message) -> None:
        ch = self._dispute_over(msg)
        if ch is not None:
            ev = msg["evidence"]
            ch.theta, ch.capacity, ch.evidence = ev.theta, ev.theta.total, ev

    def on_force_closed(self, msg: Message) -> None:
        ch = self._dispute_over(msg)
        if ch is not None:
            ev = msg["evidence"]
            ch.theta, ch.capacity, ch.evidence = ev.theta, ev.theta.total, ev
            ch.status, ch.hub = "closed", None

    # -- withdraw ------------------------------------------------------------

    def input_withdraw(self, inp: Mapping) -> None:
        sid, beta = inp["sid"], inp["beta"]
        ch = self.channels.get(beta)
        if ch is None or ch.status != "joined" or ch.hub != inp["hub"]:
            raise WrongChannelState(f"{beta} is not in hub {inp['hub']}")
        s = Session(sid, "withdraw", beta, inp["initiator"], self.round)
        self.sessions[sid] = s
        if s.initiator:
            if self.active_on(beta):
                s.done = True
                raise BusyWithTransfer(str(beta))
            self.send("withdraw", sid, self.contract_id, beta=beta, hub=ch.hub, c=ch.capacity,
                      evidence=ch.evidence)

    def active_on(self, beta: AccountId) -> bool:
        if beta in self.disputes:
            return True
        return any(not t.settled and t.own_channel == beta for t in self.transfers.values())

    def on_withdrawing(self, msg: Message) -> None:
        if msg.sender != self.contract_id:
            return
        beta = msg["beta"]
        ch = self.channels.get(beta)
        if ch is None:
            return
        s = self.sessions.get(msg.sid)
        if s is None:
            s = Session(msg.sid, "withdraw", beta, False, self.round - 1)
            self.sessions[msg.sid] = s
            respond = msg["theta"].version < ch.evidence.theta.version
        else:
            respond = not s.initiator
        s.params["seen"] = True
        if respond and msg["c"] == ch.capacity:
            self.send("withdraw", msg.sid, self.contract_id, beta=beta, hub=msg["hub"],
                      c=ch.capacity, evidence=ch.evidence)

    def on_withdrawn(self, msg: Message) -> None:
        ch = self.channels.get(msg["beta"])
        if msg.sender != self.contract_id or ch is None:
            return
        theta = msg["theta"]
        ch.status, ch.hub, ch.capacity = "open", None, msg["c"]
        if theta.version >= ch.evidence.theta.version:
            ch.theta, ch.evidence = theta, SignedDistribution(ch.beta, theta)
        s = self.sessions.get(msg.sid)
        if s is not None:
            self._finish(s, "withdrawn", c=msg["c"])

    def on_withdraw_failed(self, msg: Message) -> None:
        s = self.sessions.get(msg.sid)
        if msg.sender == self.contract_id and s is not None:
            self._finish(s, "withdraw-failed")

    # -- close ---------------------------------------------------------------

    def input_close(self, inp: Mapping) -> None:
        sid, beta = inp["sid"], inp["beta"]
        ch = self.channels.get(beta)
        if ch is None or ch.status == "closed":
            raise WrongChannelState(f"{beta} is not open")
        s = Session(sid, "close", beta, inp["initiator"], self.round)
        if s.initiator and ch.status == "joined":
            raise WrongChannelState(f"{beta} must withdraw before closing")
        self.sessions[sid] = s
        if s.initiator:
            self.send("close", sid, self.contract_id, beta=beta, c=ch.capacity,
                      evidence=ch.evidence)

    def on_closing(self, msg: Message) -> None:
        if msg.sender != self.contract_id:
            return
        beta = msg["beta"]
        ch = self.channels.get(beta)
        if ch is None:
            return
        s = self.sessions.get(msg.sid)
        if s is None:
            s = Session(msg.sid, "close", beta, False, self.round - 1)
            self.sessions[msg.sid] = s
            respond = msg["theta"].version < ch.evidence.theta.version
        else:
            respond = not s.initiator
        s.params["seen"] = True
        if respond:
            self.send("close", msg.sid, self.contract_id, beta=beta, c=ch.capacity,
                      evidence=ch.evidence)

    def on_closed(self, msg: Message) -> None:
        ch = self.channels.get(msg["beta"])
        if msg.sender != self.contract_id or ch is None:
            return
        ch.status, ch.theta = "closed", msg["theta"]
        s = self.sessions.get(msg.sid) or self._session(msg, "close", ch.beta)
        self._finish(s, "closed")
