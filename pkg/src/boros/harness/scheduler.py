"""Synchronous round scheduler with a static-corruption adversary."""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable

from ..contract import ChannelContract, ChannelState, Distribution, SignedDistribution, Status
from ..core import AccountId, BorosError, Keyring, LedgerState
from ..engine import ChannelView, Party
from ..hub import ChannelHub
from ..messages import Message, make
from . import checker
from .costs import classify
from .scenario import Scenario, account, initiators, resolve_fields

CONTRACT = account("contract")


def escrow_of(hub_name: str) -> AccountId:
    return account(hub_name + "/escrow")


@dataclass
class MessageRecord:
    round: int
    sender: str
    to: str
    kind: str
    cls: str
    status: str
    sigs: int
    fields: dict

    def as_dict(self) -> dict:
        return {"round": self.round, "from": self.sender, "to": self.to, "type": self.kind,
                "class": self.cls, "status": self.status, "sigs": self.sigs,
                "fields": self.fields}


@dataclass
class RoundRecord:
    round: int
    messages: list[MessageRecord] = field(default_factory=list)
    outputs: list[tuple[str, str, str]] = field(default_factory=list)  # (party, kind, sid)
    balances: dict[str, int] = field(default_factory=dict)
    hubs: dict[str, dict] = field(default_factory=dict)
    contract: str = ""
    findings: list[checker.Finding] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"round": self.round, "messages": [m.as_dict() for m in self.messages],
                "outputs": [list(o) for o in self.outputs], "balances": self.balances,
                "hubs": self.hubs, "contract": self.contract,
                "findings": [f.as_dict() for f in self.findings]}


@dataclass
class World:
    scenario: Scenario
    keyring: Keyring
    ledger: LedgerState
    contract: ChannelContract
    hubs: dict[AccountId, ChannelHub]
    parties: dict[AccountId, Party]
    names: dict[AccountId, str]
    corrupted: set[AccountId]
    initial: LedgerState
    baselines: list[tuple[AccountId, Distribution]] = field(default_factory=list)
    received: dict[AccountId, list[Message]] = field(default_factory=lambda: defaultdict(list))

    def name(self, acct: AccountId) -> str:
        return self.names.get(acct, str(acct))

    def role(self, acct: AccountId) -> str:
        if acct == CONTRACT:
            return "contract"
        if acct in self.hubs:
            return "hub"
        if acct in self.parties:
            return "party"
        return "unknown"

    def honest(self) -> list[Party]:
        return [p for a, p in sorted(self.parties.items()) if a not in self.corrupted]


@dataclass
class Trace:
    scenario: Scenario
    rounds: list[RoundRecord]
    world: World

    def messages(self):
        for r in self.rounds:
            yield from r.messages

    def outputs(self) -> list[tuple[int, str, str, str]]:
        return [(r.round, *o) for r in self.rounds for o in r.outputs]

    def lines(self) -> list[str]:
        return [json.dumps(r.as_dict(), sort_keys=True) for r in self.rounds]

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode() + b"\n")
        return h.hexdigest()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.lines():
                fh.write(line + "\n")


# -- world construction ------------------------------------------------------


def build_world(s: Scenario) -> World:
    keyring = Keyring(s.seed)
    names: dict[AccountId, str] = {CONTRACT: "contract"}
    ledger = LedgerState.from_balances({account(p): bal for p, bal in s.parties.items()})
    for p in s.parties:
        keyring.register(account(p))
        names[account(p)] = p
    hubs: dict[AccountId, ChannelHub] = {}
    for h in s.hubs:
        hubs[account(h)] = ChannelHub(account(h), escrow_of(h), ledger, keyring, s.params.delta)
        names[account(h)] = h
        names[escrow_of(h)] = h + "/escrow"
    contract = ChannelContract(CONTRACT, ledger, keyring, hubs)
    for hub in hubs.values():
        hub.contract = contract

    def directory(beta: AccountId):
        ch = contract.channels.get(beta)
        return None if ch is None else ch.parties

    deny = s.deny

    def approver(who: AccountId, sid: bytes, kind: str) -> bool:
        return (names.get(who), sid.decode(errors="replace"), kind) not in deny

    parties = {account(p): Party(account(p), keyring, CONTRACT, directory, approver,
                                 T=s.params.T, delta=s.params.delta) for p in s.parties}
    world = World(s, keyring, ledger, contract, hubs, parties, names,
                  {account(p) for p in s.adversary.corrupted}, ledger.copy())
    for setup in s.channels:
        _setup_channel(world, setup)
    world.initial = ledger.copy()
    return world


def _setup_channel(world: World, setup) -> None:
    """Install a channel that already exists when the scenario starts."""
    beta, a, c = account(setup.name), account(setup.a), account(setup.c)
    world.names[beta] = setup.name
    theta = Distribution.of(setup.version, {account(p): x for p, x in setup.shares.items()})
    sigs = tuple(world.keyring.sign(p, theta.payload(beta)) for p in (a, c))
    evidence = SignedDistribution(beta, theta, sigs)
    cap = theta.total
    hub_id = account(setup.hub) if setup.hub else None
    sid = ("setup:" + setup.name).encode()
    state = ChannelState(beta, a, c, cap, theta, Status.JOINED if hub_id else Status.OPEN,
                         hub=hub_id, x_a=theta.share(a))
    world.contract.install(state)
    world.baselines.append((beta, theta))
    if hub_id is None:
        world.ledger.accounts[CONTRACT] += cap
    else:
        hub = world.hubs[hub_id]
        world.ledger.accounts[hub.escrow] += cap
        hub.hub_join(sid, beta, cap, refund_to=CONTRACT, parties=(a, c))
    for me, other in ((a, c), (c, a)):
        world.parties[me].install(ChannelView(beta, me, other, cap, theta, evidence,
                                              "joined" if hub_id else "open", hub_id))


# -- adversary ---------------------------------------------------------------


def _mutate(world: World, msg: Message, mutation: str) -> Message | None:
    body = dict(msg.body)
    if mutation == "dx_plus" and "dx" in body:
        body["dx"] = body["dx"] + 1
    elif mutation == "c_minus" and isinstance(body.get("c"), int) and body["c"] > 0:
        body["c"] = body["c"] - 1
    elif mutation in ("theta_steal", "theta_bump") and isinstance(body.get("theta"), Distribution):
        theta: Distribution = body["theta"]
        other = next((p for p in theta.parties if p != msg.sender), None)
        if other is None or msg.sender not in theta.parties or theta.share(other) == 0:
            return None
        moved = theta.shifted(msg.sender, 1, bump=mutation == "theta_bump")
        body["theta"] = moved.shifted(other, -1, bump=False)
    elif mutation == "stale_evidence" and isinstance(body.get("evidence"), SignedDistribution):
        party = world.parties.get(msg.sender)
        beta = body["evidence"].beta
        older = [ev for ev in (party.history if party else []) if ev.beta == beta]
        if not older:
            return None
        body["evidence"] = older[0]
    else:
        return None
    keep = tuple(sig for sig in msg.sigs if sig.signer != msg.sender)
    return make(world.keyring, msg.kind, msg.sid, msg.sender, msg.to, extra_sigs=keep, **body)


def _matches(d, msg: Message, world: World) -> bool:
    for key, want in d.match.items():
        if key == "kind" and msg.kind != want:
            return False
        if key == "to" and world.name(msg.to) != want:
            return False
    return True


def _active(d, r: int) -> bool:
    if d.action == "silence":
        return r >= d.round and (d.until is None or r <= d.until)
    return d.round <= r <= (d.until if d.until is not None else d.round)


def _inject(world: World, party: Party, d, r: int) -> list[Message]:
    target = account(d.target) if d.target else None
    sid = f"adv:{world.name(party.id)}:{r}".encode()
    out: list[Message] = []
    if d.what == "replay":
        pool = world.received.get(party.id, [])
        if pool and target is not None:
            out.append(pool[-1].readdressed(target))
    elif d.what == "forge":
        if party.outbox and target is not None:
            m = party.outbox[-1]
            out.append(Message(m.kind, m.sid, target, m.to, m.body, m.sigs))
    elif d.what in ("fr", "fr-stale"):
        for ch in sorted(party.channels.values(), key=lambda c: c.beta):
            if ch.status == "joined":
                older = [ev for ev in party.history if ev.beta == ch.beta]
                ev = older[0] if d.what == "fr-stale" and older else ch.evidence
                out.append(make(world.keyring, "fr", sid, party.id, ch.hub, beta=ch.beta,
                                evidence=ev))
    elif d.what in ("withdraw", "close"):
        for ch in sorted(party.channels.values(), key=lambda c: c.beta):
            older = [ev for ev in party.history if ev.beta == ch.beta] or [ch.evidence]
            ev = older[0]
            if d.what == "withdraw" and ch.status == "joined":
                out.append(make(world.keyring, "withdraw", sid, party.id, CONTRACT, beta=ch.beta,
                                hub=ch.hub, c=ev.theta.total, evidence=ev))
            elif d.what == "close" and ch.status == "open":
                out.append(make(world.keyring, "close", sid, party.id, CONTRACT, beta=ch.beta,
                                c=ev.theta.total, evidence=ev))
    return out


def apply_adversary(world: World, party: Party, outbox: list[Message], r: int,
                    log: Callable[[Message, str], None]) -> list[Message]:
    """Rewrite a corrupted party's outbox according to this round's directives."""
    name = world.name(party.id)
    result = list(outbox)
    for d in world.scenario.adversary.directives:
        if d.party != name or not _active(d, r):
            continue
        if d.action == "silence":
            for m in result:
                log(m, "dropped")
            result = []
        elif d.action == "drop":
            keep = []
            for m in result:
                if _matches(d, m, world):
                    log(m, "dropped")
                else:
                    keep.append(m)
            result = keep
        elif d.action == "replace":
            new = []
            for m in result:
                changed = _mutate(world, m, d.mutation or "") if _matches(d, m, world) else None
                if changed is None:
                    new.append(m)
                else:
                    log(m, "dropped")
                    new.append(changed)
            result = new
        elif d.action == "inject":
            result.extend(_inject(world, party, d, r))
    return result


# -- round loop --------------------------------------------------------------


def _record(world: World, r: int, msg: Message, status: str) -> MessageRecord:
    cls = classify(msg.kind, world.role(msg.sender), world.role(msg.to))
    return MessageRecord(r, world.name(msg.sender), world.name(msg.to), msg.kind, cls, status,
                         len(msg.sigs), _fields(world, msg.body))


def _fields(world: World, body) -> dict:
    out = {}
    for k in sorted(body):
        v = body[k]
        if isinstance(v, AccountId):
            out[k] = world.name(v)
        elif isinstance(v, Message):
            out[k] = {"type": v.kind, "from": world.name(v.sender)}
        elif isinstance(v, Distribution):
            out[k] = {"w": v.version, **{world.name(p): x for p, x in v.shares}}
        elif isinstance(v, SignedDistribution):
            out[k] = {"w": v.theta.version, **{world.name(p): x for p, x in v.theta.shares},
                      "sigs": len(v.sigs)}
        elif isinstance(v, (int, str, bool)) or v is None:
            out[k] = v
        elif isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], AccountId):
            out[k] = [world.name(v[0]), v[1]]
        else:
            out[k] = repr(v)
    return out


def _inputs_by_round(s: Scenario) -> dict[int, dict[AccountId, list[dict]]]:
    first = initiators(s.script)
    table: dict[int, dict[AccountId, list[dict]]] = defaultdict(lambda: defaultdict(list))
    for st in s.script:
        inp = {"kind": st.kind, "sid": st.sid.encode(), "initiator": first[st.sid] == st.party,
               **resolve_fields(st.fields)}
        table[st.round][account(st.party)].append(inp)
    return table


def run_scenario(s: Scenario, observe: bool = True) -> Trace:
    """Execute every round of ``s`` and return the complete trace."""
    world = build_world(s)
    inputs = _inputs_by_round(s)
    queue: dict[int, list[Message]] = defaultdict(list)
    rounds: list[RoundRecord] = []
    supply = world.ledger.total()
    for r in range(1, s.params.max_rounds + 1):
        rec = RoundRecord(r)
        _emit(world, r, world.contract.begin_round(r), rec, queue, r)
        inbox: dict[AccountId, list[Message]] = defaultdict(list)
        for msg in queue.pop(r, []):
            if msg.to in world.parties:
                inbox[msg.to].append(msg)
                world.received[msg.to].append(msg)
            else:
                rec.messages.append(_record(world, r, msg, "undeliverable"))
        outboxes: dict[AccountId, list[Message]] = {}
        for pid, party in sorted(world.parties.items()):
            before = len(party.outputs)
            out = party.step(r, inbox.get(pid, []), inputs.get(r, {}).get(pid, []))
            for _, kind, sid, _info in party.outputs[before:]:
                rec.outputs.append((world.name(pid), kind, sid.decode(errors="replace")))
            if pid in world.corrupted:
                out = apply_adversary(world, party, out, r,
                                      lambda m, st: rec.messages.append(_record(world, r, m, st)))
            outboxes[pid] = out
        for pid in sorted(outboxes):
            for msg in outboxes[pid]:
                _dispatch(world, r, msg, rec, queue)
        for hid in sorted(world.hubs):
            _emit(world, r, world.hubs[hid].end_round(r), rec, queue, r + 1)
        rec.balances = world.ledger.snapshot()
        rec.hubs = {world.name(h): hub.snapshot() for h, hub in sorted(world.hubs.items())}
        rec.contract = world.contract.state_digest()
        if observe:
            rec.findings = checker.observe_round(world, r, queue.get(r + 1, []), supply)
        rounds.append(rec)
    return Trace(s, rounds, world)


def _emit(world: World, r: int, notes: list[Message], rec: RoundRecord, queue, at: int) -> None:
    """Queue functionality notifications for delivery in round ``at``."""
    for note in notes:
        rec.messages.append(_record(world, r, note, "sent"))
        queue[at].append(note)


def _dispatch(world: World, r: int, msg: Message, rec: RoundRecord, queue) -> None:
    target = world.role(msg.to)
    status = "sent"
    notes: list[Message] = []
    if target in ("contract", "hub"):
        handler = world.contract if target == "contract" else world.hubs[msg.to]
        try:
            notes = handler.handle(msg, r)
        except (BorosError, KeyError, TypeError, ValueError, AttributeError) as exc:
            status = f"rejected: {type(exc).__name__}"
    elif target == "party":
        queue[r + 1].append(msg)
    else:
        status = "undeliverable"
    rec.messages.append(_record(world, r, msg, status))
    _emit(world, r, notes, rec, queue, r + 1)
