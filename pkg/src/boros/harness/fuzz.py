"""Random adversaries against the base operations.

Each run corrupts a random proper subset of the four parties, gives the
corrupted ones a handful of random directives, and appends a settlement
epilogue (withdraw, then close, on every channel) so that balance security
can be judged on final payouts.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from itertools import combinations

from . import library
from ..core import BorosError
from .checker import Finding, PropertyReport, check_properties, honest_complaints
from .scenario import AdversaryScript, Directive, Scenario, Step
from .scheduler import run_scenario

PARTIES = ("A", "B", "C", "D")
KINDS = ("pcc", "gcc", "iou", "receipt", "icu", "conf", "fr", "fr-reply", "join-req", "join",
         "withdraw", "close", "updating", "update-ok")
MUTATIONS = ("dx_plus", "c_minus", "theta_steal", "theta_bump", "stale_evidence")
INJECTIONS = ("replay", "forge", "fr", "fr-stale", "withdraw", "close")
WITHDRAW_AT, CLOSE_AT, MAX_ROUNDS = 20, 25, 30
LAST_DIRECTIVE = 12

BASES = {
    "cc-transfer": lambda: library.cc_transfer(),
    "join": lambda: library.join(),
    "withdraw": lambda: library.withdraw(),
    "close": lambda: library.close(),
    "update": lambda: library.update(in_hub=True),
}

# every proper subset of the cast, the empty one included
CORRUPTIONS = [frozenset(c) for k in range(len(PARTIES)) for c in combinations(PARTIES, k)]


@dataclass
class FuzzReport:
    base: str
    runs: int = 0
    report: PropertyReport = field(default_factory=PropertyReport)
    failures: list[tuple[int, list[Finding]]] = field(default_factory=list)  # (seed, findings)
    disputed: int = 0  # runs in which an honest party lodged a force-reply

    @property
    def ok(self) -> bool:
        return not self.failures

    def counts(self) -> dict[str, int]:
        return self.report.counts()


def with_epilogue(s: Scenario, honest_first: frozenset[str] = frozenset()) -> Scenario:
    """Append a withdraw and a close for both parties of every channel."""
    steps = list(s.script)
    channels = [(ch.name, ch.a, ch.c) for ch in s.channels]
    for st in s.script:  # channels opened by the script itself
        if st.kind == "open" and "counterparty" in st.fields:
            channels.append((st.fields["beta"], st.party, st.fields["counterparty"]))
    for name, a, c in channels:
        pair = sorted((a, c), key=lambda p: p not in honest_first)  # honest party initiates
        for p in pair:
            steps.append(Step(WITHDRAW_AT, p, "withdraw", f"end-w:{name}",
                              {"beta": name, "hub": "H"}))
            steps.append(Step(CLOSE_AT, p, "close", f"end-c:{name}", {"beta": name}))
    params = replace(s.params, max_rounds=MAX_ROUNDS)
    return replace(s, script=steps, params=params)


def random_directive(rng: random.Random, party: str) -> Directive:
    r = rng.randint(1, LAST_DIRECTIVE)
    action = rng.choice(("silence", "drop", "replace", "inject"))
    if action == "silence":
        return Directive(r, action, party, until=min(LAST_DIRECTIVE, r + rng.randint(0, 4)))
    if action == "drop":
        return Directive(r, action, party, match={"kind": rng.choice(KINDS)},
                         until=r + rng.randint(0, 2))
    if action == "replace":
        return Directive(r, action, party, match={"kind": rng.choice(KINDS)},
                         mutation=rng.choice(MUTATIONS), until=r + rng.randint(0, 2))
    return Directive(r, action, party, what=rng.choice(INJECTIONS),
                     target=rng.choice(PARTIES + ("H",)))


def random_scenario(base: str, seed: int) -> Scenario:
    rng = random.Random(seed)
    corrupted = rng.choice(CORRUPTIONS)
    directives = [random_directive(rng, p) for p in sorted(corrupted)
                  for _ in range(rng.randint(1, 3))]
    s = BASES[base]()
    honest = frozenset(PARTIES) - corrupted
    s = replace(s, name=f"{base}-fuzz-{seed}", seed=seed,
                adversary=AdversaryScript(corrupted, directives))
    return with_epilogue(s, honest_first=honest)


def fuzz(base: str, n: int, seed: int = 0) -> FuzzReport:
    """Run ``n`` random adversaries against ``base`` and collect every violation."""
    if n < 1:
        raise ValueError("n must be at least 1")
    master = random.Random(seed)
    out = FuzzReport(base)
    for _ in range(n):
        run_seed = master.getrandbits(63)
        try:
            trace = run_scenario(random_scenario(base, run_seed))
            rep = check_properties(trace, require_settled=True)
            out.disputed += bool(honest_complaints(trace))
        except BorosError as exc:  # a ledger refusing a move is itself a broken invariant
            rep = PropertyReport([Finding("INV", 0, "-", f"run aborted: {exc!r}")], 1)
        out.runs += 1
        out.report.merge(rep)
        if rep.findings:
            out.failures.append((run_seed, rep.findings))
    return out
