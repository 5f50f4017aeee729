"""Monolithic reference functionality for all-honest runs.

The oracle knows nothing about messages, signatures, contracts or hubs. It
keeps the channel space and party balances directly and schedules the
environment-visible outputs at the rounds the honest protocol delivers them,
so a protocol run can be compared with it round by round.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

from ..core import AccountId, BorosError
from .scenario import Scenario, Step, account, initiators, resolve_fields


class OracleUnsupportedAdversary(BorosError):
    """The oracle only defines behaviour for scenarios without an adversary."""


@dataclass
class Entry:
    parties: tuple[AccountId, AccountId]
    shares: dict[AccountId, int]
    hub: AccountId | None = None
    closed: bool = False

    @property
    def capacity(self) -> int:
        return sum(self.shares.values())

    def other(self, p: AccountId) -> AccountId:
        return self.parties[1] if self.parties[0] == p else self.parties[0]


@dataclass
class OracleTrace:
    scenario: Scenario
    outputs: dict[int, list[tuple[str, str, str]]] = field(default_factory=dict)
    balances: dict[int, dict[str, int]] = field(default_factory=dict)


class IdealHubFunctionality:
    """Channel space B plus the hub enrollment map, driven round by round."""

    def __init__(self, s: Scenario):
        if s.adversary.corrupted:
            raise OracleUnsupportedAdversary("corrupted parties present")
        if any(kind == "conf" for _, _, kind in s.deny):
            raise OracleUnsupportedAdversary("refused confirmations lead to disputes")
        self.s = s
        self.T, self.delta = s.params.T, s.params.delta
        self.balance = {account(p): b for p, b in s.parties.items()}
        self.B: dict[AccountId, Entry] = {}
        for ch in s.channels:
            shares = {account(p): x for p, x in ch.shares.items()}
            self.B[account(ch.name)] = Entry((account(ch.a), account(ch.c)), shares,
                                             account(ch.hub) if ch.hub else None)
        self.busy: dict[tuple[AccountId, AccountId], int] = {}
        self.in_transfer: dict[AccountId, int] = {}
        self.pending_withdraw: dict[AccountId, int] = {}
        self.agenda: dict[int, list[Callable[[], None]]] = defaultdict(list)
        self.out: dict[int, list[tuple[str, str, str]]] = defaultdict(list)

    # -- helpers -------------------------------------------------------------

    def denied(self, p: AccountId, sid: str, kind: str) -> bool:
        return (p.label, sid, kind) in self.s.deny

    def at(self, r: int, fn: Callable[[], None]) -> None:
        self.agenda[r].append(fn)

    def emit(self, r: int, p: AccountId, kind: str, sid: str) -> None:
        self.out[r].append((p.label, kind, sid))

    def is_busy(self, p: AccountId, beta: AccountId, r: int) -> bool:
        return self.busy.get((p, beta), 0) >= r

    def hold(self, p: AccountId, beta: AccountId, until: int) -> None:
        self.busy[(p, beta)] = max(self.busy.get((p, beta), 0), until)

    def usable(self, p: AccountId, beta: AccountId) -> Entry | None:
        e = self.B.get(beta)
        if e is None or e.closed or p not in e.parties:
            return None
        return e

    # -- driver --------------------------------------------------------------

    def run(self) -> OracleTrace:
        first = initiators(self.s.script)
        by_round: dict[int, list[Step]] = defaultdict(list)
        for st in self.s.script:
            by_round[st.round].append(st)
        trace = OracleTrace(self.s)
        for r in range(1, self.s.params.max_rounds + 1):
            for fn in self.agenda.pop(r, []):
                fn()
            steps = by_round.get(r, [])
            starters = [st for st in steps if first[st.sid] == st.party]
            starters.sort(key=lambda st: account(st.party))
            for st in starters:
                responders = [x for x in steps if x.sid == st.sid and x is not st]
                getattr(self, "op_" + st.kind.replace("-", "_"))(r, st, responders)
            trace.outputs[r] = sorted(self.out.pop(r, []))
            trace.balances[r] = {p.label: b for p, b in sorted(self.balance.items())}
        return trace

    # -- operations ----------------------------------------------------------

    def op_open(self, s: int, st: Step, responders: list[Step]) -> None:
        f = resolve_fields(st.fields)
        a, c, beta, x_a = account(st.party), f["counterparty"], f["beta"], f["x"]
        if beta in self.B or self.balance[a] < x_a:
            for resp in responders:
                self.emit(s + 1, account(resp.party), "open-failed", st.sid)
            return
        self.balance[a] -= x_a
        self.hold(a, beta, s + 2)
        resp = next((x for x in responders if x.party == c.label), None)
        x_c = resp.fields.get("x") if resp is not None else None
        ok = (x_c is not None and not self.denied(c, st.sid, "open")
              and self.balance[c] >= x_c)

        def confirm():
            self.balance[c] -= x_c

        def finish():
            if ok:
                self.B[beta] = Entry((a, c), {a: x_a, c: x_c})
            else:
                self.balance[a] += x_a
            for p in (a, c):
                self.emit(s + 2, p, "opened" if ok else "open-failed", st.sid)

        if ok:
            self.at(s + 1, confirm)
        self.at(s + 2, finish)

    def op_update(self, s: int, st: Step, responders: list[Step]) -> None:
        f = resolve_fields(st.fields)
        a, beta, shares = account(st.party), f["beta"], f["shares"]
        e = self.usable(a, beta)
        if e is None or self.is_busy(a, beta, s) or a in self.in_transfer:
            return
        self.hold(a, beta, s + 2)
        c = e.other(a)
        if set(shares) != set(e.parties) or sum(shares.values()) != e.capacity:
            return
        if self.is_busy(c, beta, s + 1) or self.denied(c, st.sid, "update"):
            return

        def accept():
            e.shares = dict(shares)
            self.emit(s + 1, c, "updated", st.sid)
            self.emit(s + 2, a, "updated", st.sid)

        self.at(s + 1, accept)

    def op_join(self, s: int, st: Step, responders: list[Step]) -> None:
        f = resolve_fields(st.fields)
        a, beta, hub = account(st.party), f["beta"], f["hub"]
        e = self.usable(a, beta)
        if e is None or e.hub is not None or self.is_busy(a, beta, s):
            return  # joining a joined channel is ignored
        self.hold(a, beta, s + 2)
        c = e.other(a)
        if self.is_busy(c, beta, s + 1):
            return self.emit(s + 2, a, "join-failed", st.sid)
        if self.denied(c, st.sid, "join"):
            self.emit(s + 1, c, "join-failed", st.sid)
            self.emit(s + 2, a, "join-failed", st.sid)
            return

        def enroll():
            e.hub = hub

        self.at(s + 1, enroll)
        for p in (a, c):
            self.emit(s + 2, p, "joined", st.sid)

    def op_cc_transfer(self, s: int, st: Step, responders: list[Step]) -> None:
        steps = [st] + [x for x in responders if x.kind == "cc-transfer"]
        f = resolve_fields(st.fields)
        beta_ac, beta_bd, dx, hub = f["beta_ac"], f["beta_bd"], f["dx"], f["hub"]
        ac, bd = self.B.get(beta_ac), self.B.get(beta_bd)
        if ac is None or bd is None:
            return
        sid = st.sid

        def initiator(entry: Entry) -> AccountId | None:
            return next((account(x.party) for x in steps if account(x.party) in entry.parties),
                        None)

        def valid(p: AccountId | None, beta: AccountId, entry: Entry, check_dx: bool) -> bool:
            return (p is not None and not entry.closed and entry.hub == hub and beta_ac != beta_bd
                    and dx >= 1 and p not in self.in_transfer and not self.is_busy(p, beta, s)
                    and (not check_dx or dx <= entry.shares[p]))

        a, b = initiator(ac), initiator(bd)
        a_ok, b_ok = valid(a, beta_ac, ac, True), valid(b, beta_bd, bd, False)
        c = ac.other(a) if a is not None else None
        d = bd.other(b) if b is not None else None
        # who received a prepare request and accepted to hold a transfer
        c_in = a_ok and c not in self.in_transfer and not self.is_busy(c, beta_ac, s + 1)
        d_in = b_ok and d not in self.in_transfer and not self.is_busy(d, beta_bd, s + 1)
        c_grants = c_in and not self.denied(c, sid, "gcc")
        d_grants = d_in and not self.denied(d, sid, "gcc")
        members = [(p, beta) for p, beta, on in ((a, beta_ac, a_ok), (c, beta_ac, c_in),
                                                 (b, beta_bd, b_ok), (d, beta_bd, d_in)) if on]
        if c_grants and d_grants:
            def move():
                ac.shares[a] -= dx
                bd.shares[b] += dx

            self.at(s + 3, move)
            for p, beta in members:
                done = s + (6 if p in (c, d) else 7)
                self.emit(done, p, "cc-transferred", sid)
                self.in_transfer[p] = done
                self.hold(p, beta, done)
            self.at(s + 8, lambda: [self.in_transfer.pop(p, None) for p, _ in members])
            return
        settle = s + self.T + 2
        for p, beta in members:
            if (p == c and not c_grants) or (p == d and not d_grants):
                self.emit(s + 1, p, "transfer-failed", sid)
                continue
            self.emit(s + (3 if p == b else 2), p, "transfer-failed", sid)
            self.in_transfer[p] = settle
            self.hold(p, beta, settle)
        self.at(settle + 1, lambda: [self.in_transfer.pop(p, None) for p, _ in members])

    def op_withdraw(self, s: int, st: Step, responders: list[Step]) -> None:
        f = resolve_fields(st.fields)
        a, beta, hub = account(st.party), f["beta"], f["hub"]
        e = self.usable(a, beta)
        if e is None or e.hub != hub:
            return  # withdrawing a channel that is not in the hub is ignored
        c = e.other(a)
        cosign = any(x.party == c.label for x in responders)
        if self.is_busy(a, beta, s) or a in self.in_transfer:
            if cosign:
                self.emit(s + 1, c, "withdraw-failed", st.sid)
            return
        if self.pending_withdraw.get(beta, 0) >= s:
            self.emit(s + 1, a, "withdraw-failed", st.sid)
            return
        self.pending_withdraw[beta] = s + 1
        self.hold(a, beta, s + 2)

        def leave():
            e.hub = None

        self.at(s + 1 if cosign else s + 2, leave)
        for p in (a, c):
            self.emit(s + 2, p, "withdrawn", st.sid)

    def op_close(self, s: int, st: Step, responders: list[Step]) -> None:
        f = resolve_fields(st.fields)
        a, beta = account(st.party), f["beta"]
        e = self.usable(a, beta)
        if e is None:
            return
        c = e.other(a)
        respond = any(x.party == c.label for x in responders)
        if e.hub is not None:
            if respond:  # the request is ignored; the responder never hears of it
                self.emit(s + 1, c, "close-failed", st.sid)
            return
        self.hold(a, beta, s + 2)

        def payout():
            for p in e.parties:
                self.balance[p] += e.shares[p]
            e.closed = True

        self.at(s + 1 if respond else s + 2, payout)
        for p in (a, c):
            self.emit(s + 2, p, "closed", st.sid)


def run_oracle(s: Scenario) -> OracleTrace:
    return IdealHubFunctionality(s).run()


def oracle_diff(s: Scenario) -> list[str]:
    """Every round where the protocol and the oracle disagree, described."""
    from .scheduler import run_scenario

    ideal = run_oracle(s)
    real = run_scenario(s, observe=False)
    parties = set(s.parties)
    diffs = []
    for rec in real.rounds:
        got = sorted(rec.outputs)
        want = ideal.outputs.get(rec.round, [])
        if got != want:
            diffs.append(f"round {rec.round}: outputs {got} != oracle {want}")
        bal = {p: b for p, b in rec.balances.items() if p in parties}
        if bal != ideal.balances.get(rec.round):
            diffs.append(f"round {rec.round}: balances {bal} != oracle {ideal.balances[rec.round]}")
    return diffs


def compare_to_oracle(s: Scenario) -> bool:
    return not oracle_diff(s)
