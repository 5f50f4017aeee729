"""Security properties evaluated over a run.

P1 enrollment consensus, P2 capacity consensus and the ledger invariants are
checked at every round boundary; P3 balance security at the end of the run.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from ..contract import Distribution, SignedDistribution, Status
from ..core import AccountId, digest
from ..messages import Message

if TYPE_CHECKING:
    from .scheduler import Trace, World


@dataclass(frozen=True)
class Finding:
    prop: str  # P1 | P2 | P3 | INV
    round: int
    party: str
    detail: str

    def as_dict(self) -> dict:
        return {"prop": self.prop, "round": self.round, "party": self.party, "detail": self.detail}


@dataclass
class PropertyReport:
    findings: list[Finding] = field(default_factory=list)
    checked: int = 0

    def violations(self, prop: str | None = None) -> list[Finding]:
        return [f for f in self.findings if prop is None or f.prop == prop]

    @property
    def ok(self) -> bool:
        return not self.findings

    def counts(self) -> dict[str, int]:
        out = {"P1": 0, "P2": 0, "P3": 0, "INV": 0}
        for f in self.findings:
            out[f.prop] += 1
        return out

    def merge(self, other: "PropertyReport") -> None:
        self.findings.extend(other.findings)
        self.checked += other.checked


def _inflight_channels(msgs: Iterable[Message]) -> set[AccountId]:
    out: set[AccountId] = set()
    for m in msgs:
        out.update(m.channels())
    return out


def observe_round(world: "World", r: int, inflight: list[Message], supply: int) -> list[Finding]:
    """Invariants and consensus properties at the end of round ``r``."""
    found: list[Finding] = []
    ledger, contract = world.ledger, world.contract
    if ledger.total() != supply:
        found.append(Finding("INV", r, "-", f"coin supply {ledger.total()} != {supply}"))
    if ledger.balance(contract.account) != contract.escrow_expected():
        found.append(Finding("INV", r, "contract", f"escrow {ledger.balance(contract.account)} "
                                                   f"!= {contract.escrow_expected()}"))
    for hid, hub in world.hubs.items():
        if ledger.balance(hub.escrow) != hub.total_capacity():
            found.append(Finding("INV", r, world.name(hid), "hub escrow != sum of capacities"))
        if hub.tree_commit() != hub.recompute_commit():
            found.append(Finding("INV", r, world.name(hid), "tree commitment is stale"))
    moving = _inflight_channels(inflight)
    pending = set(contract._opening) | set(contract._withdrawing) | set(contract._closing)
    for hub in world.hubs.values():
        for rec in hub.pending.values():
            pending.update((rec.from_channel, rec.to_channel))
        pending.update(hub.disputes)
    for party in world.honest():
        busy = party.busy_channels() | moving | pending
        for beta, view in party.channels.items():
            if beta in busy:
                continue
            name = world.name(party.id)
            hub_id = _hub_of(world, beta)
            if view.status == "joined" and hub_id != view.hub:
                found.append(Finding("P1", r, name, f"{world.name(beta)} thought joined, hub "
                                                    f"says {world.name(hub_id) if hub_id else 'absent'}"))
            elif view.status != "joined" and hub_id is not None:
                found.append(Finding("P1", r, name, f"{world.name(beta)} is in hub "
                                                    f"{world.name(hub_id)} but seen {view.status}"))
            if view.status == "joined" and hub_id is not None:
                cap = world.hubs[hub_id].capacity(beta)
                if view.capacity != cap or view.theta.total != cap:
                    found.append(Finding("P2", r, name, f"{world.name(beta)} capacity "
                                                        f"{view.capacity}/{view.theta.total} != {cap}"))
    return found


def _hub_of(world: "World", beta: AccountId) -> AccountId | None:
    for hid, hub in world.hubs.items():
        if beta in hub.members:
            return hid
    return None


# -- balance security --------------------------------------------------------


def _distributions(world: "World", trace: "Trace") -> dict[AccountId, set[Distribution]]:
    """Every distribution that appeared anywhere in the run, per channel."""
    seen: dict[AccountId, set[Distribution]] = defaultdict(set)
    for beta, theta in world.baselines:
        seen[beta].add(theta)

    def visit(beta, value):
        if isinstance(value, Distribution) and beta is not None:
            seen[beta].add(value)
        elif isinstance(value, SignedDistribution):
            seen[value.beta].add(value.theta)
        elif isinstance(value, Message):
            b = value.body.get("beta")
            for v in value.body.values():
                visit(b if isinstance(b, AccountId) else beta, v)

    for msgs in world.received.values():
        for m in msgs:
            visit(None, m)
    for party in world.parties.values():
        for ev in party.history:
            seen[ev.beta].add(ev.theta)
        for ch in party.channels.values():
            seen[ch.beta].add(ch.theta)
            seen[ch.beta].add(ch.evidence.theta)
        for t in party.transfers.values():
            if t.proposal is not None:
                seen[t.own_channel].add(t.proposal)
    for beta, ch in world.contract.channels.items():
        if ch.dist is not None:
            seen[beta].add(ch.dist)
    return seen


def entitlements(world: "World", trace: "Trace") -> dict[AccountId, dict[AccountId, int]]:
    """Minimum payout each party is owed per channel.

    A party is owed its share in the weakest distribution it endorsed at or
    above the newest version both parties (or a hub, or the contract) agreed on.
    """
    signed: dict[AccountId, set[bytes]] = defaultdict(set)
    for signer, payload in world.keyring.log:
        signed[signer].add(digest(payload))
    hub_ids = list(world.hubs)
    baseline = {(beta, theta) for beta, theta in world.baselines}
    for beta, ch in world.contract.channels.items():
        if ch.dist is not None:
            baseline.add((beta, ch.dist))
    owed: dict[AccountId, dict[AccountId, int]] = defaultdict(dict)
    for beta, thetas in _distributions(world, trace).items():
        ch = world.contract.channels.get(beta)
        if ch is None:
            continue
        parties = ch.parties

        def by(p, theta):
            return digest(theta.payload(beta)) in signed[p]

        def agreed(theta):
            return (all(by(p, theta) for p in parties) or (beta, theta) in baseline
                    or any(digest(theta.cert_payload(beta)) in signed[h] for h in hub_ids))

        valid = [t for t in thetas if set(t.parties) == set(parties)]
        agreed_versions = [t.version for t in valid if agreed(t)]
        if not agreed_versions:
            continue
        top = max(agreed_versions)
        for p in parties:
            mine = [t.share(p) for t in valid if t.version >= top and (by(p, t) or agreed(t))]
            owed[p][beta] = min(mine)
    return owed


def check_balance_security(trace: "Trace", require_settled: bool = False) -> list[Finding]:
    """Compare each honest party's net ledger gain with what it is owed.

    Parties with channels still open at the end are only compared when
    ``require_settled`` is set, in which case the open channel is itself a finding.
    """
    world = trace.world
    last = trace.rounds[-1].round if trace.rounds else 0
    found: list[Finding] = []
    owed = entitlements(world, trace)
    deposits: dict[AccountId, int] = defaultdict(int)
    for rec in trace.messages():
        if rec.kind == "open" and rec.to == "contract" and rec.status == "sent":
            deposits[AccountId.named(rec.sender)] += rec.fields.get("x", 0)
    for party in world.honest():
        name = world.name(party.id)
        unsettled = [b for b in party.channels
                     if b in world.contract.channels
                     and world.contract.channels[b].status is not Status.CLOSED]
        if unsettled and not require_settled:
            continue
        for beta in unsettled:
            found.append(Finding("P3", last, name, f"{world.name(beta)} never settled "
                                                   f"({world.contract.channels[beta].status.value})"))
        gained = world.ledger.balance(party.id) - world.initial.balance(party.id) \
            + deposits[party.id]
        due = sum(owed.get(party.id, {}).values())
        if gained < due:
            found.append(Finding("P3", last, name, f"received {gained}, owed {due}"))
    return found


def check_properties(trace: "Trace", require_settled: bool = False) -> PropertyReport:
    report = PropertyReport()
    for rec in trace.rounds:
        report.findings.extend(rec.findings)
    report.findings.extend(check_balance_security(trace, require_settled))
    report.findings.extend(check_dispute_liveness(trace))
    report.checked = len(trace.rounds)
    return report


def dispute_latency(trace: "Trace") -> list[tuple[str, int, int | None]]:
    """(channel, opened round, closed round) for every dispute a hub opened."""
    out = []
    for hub in trace.world.hubs.values():
        opened: dict[AccountId, int] = {}
        for rnd, event, beta, _sid in hub.history:
            if event == "opened":
                opened[beta] = rnd
            elif beta in opened:
                out.append((trace.world.name(beta), opened.pop(beta), rnd))
        out.extend((trace.world.name(b), o, None) for b, o in opened.items())
    return out


def honest_complaints(trace: "Trace") -> list:
    """Force-reply requests honest parties actually sent to a hub."""
    honest = {trace.world.name(p.id) for p in trace.world.honest()}
    return [rec for rec in trace.messages()
            if rec.kind == "fr" and rec.sender in honest and rec.status == "sent"]


def check_dispute_liveness(trace: "Trace") -> list[Finding]:
    """Every complaint an honest party lodged must end within the reply window."""
    world = trace.world
    delta = trace.scenario.params.delta
    last = trace.rounds[-1].round if trace.rounds else 0
    ends: dict[str, list[tuple[int, int]]] = defaultdict(list)  # channel -> (opened, ended)
    for ch, opened, closed in dispute_latency(trace):
        ends[ch].append((opened, closed if closed is not None else last + 1))
    found = []
    for rec in honest_complaints(trace):
        beta = rec.fields.get("beta")
        span = next(((o, e) for o, e in ends.get(beta, []) if o == rec.round), None)
        if span is None:
            found.append(Finding("P3", rec.round, rec.sender, f"complaint on {beta} never opened"))
        elif span[1] - span[0] > delta:
            found.append(Finding("P3", span[1], rec.sender,
                                 f"complaint on {beta} took {span[1] - span[0]} rounds"))
    return found
