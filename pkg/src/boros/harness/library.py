"""Ready-made scenarios for the six operations and their failure branches.

The standard cast: A and C share channel ``ac``; B and D share ``bd``; both
channels may sit in hub ``H``.
"""

from __future__ import annotations

from typing import Any

from .scenario import Scenario, from_dict

BALANCES = {"A": 100, "B": 100, "C": 100, "D": 100}
AC = {"name": "ac", "a": "A", "c": "C", "shares": {"A": 10, "C": 15}}
BD = {"name": "bd", "a": "B", "c": "D", "shares": {"B": 5, "D": 35}}


def _base(name: str, channels: list[dict], script: list[dict], max_rounds: int = 6,
          **extra: Any) -> Scenario:
    d = {"name": name, "seed": extra.pop("seed", 7), "parties": dict(BALANCES), "hubs": ["H"],
         "channels": channels, "script": script, "params": {"max_rounds": max_rounds}}
    d.update(extra)
    return from_dict(d)


def joined(ch: dict, hub: str = "H") -> dict:
    return {**ch, "hub": hub}


def open_channel(confirm: bool = True, x_a: int = 10, x_c: int = 15) -> Scenario:
    script = [{"round": 1, "party": "A", "kind": "open", "sid": "o1", "beta": "ac",
               "counterparty": "C", "x": x_a}]
    if confirm:
        script.append({"round": 1, "party": "C", "kind": "open", "sid": "o1", "beta": "ac",
                       "x": x_c})
    return _base("open" if confirm else "open-failed", [], script)


def update(shares: dict | None = None, deny: bool = False, in_hub: bool = False) -> Scenario:
    ch = joined(AC) if in_hub else AC
    script = [{"round": 1, "party": "A", "kind": "update", "sid": "u1", "beta": "ac",
               "shares": shares or {"A": 7, "C": 18}}]
    extra = {"deny": [{"party": "C", "sid": "u1", "kind": "update"}]} if deny else {}
    return _base("update", [ch], script, **extra)


def join(deny: bool = False) -> Scenario:
    script = [{"round": 1, "party": "A", "kind": "join", "sid": "j1", "beta": "ac", "hub": "H"}]
    extra = {"deny": [{"party": "C", "sid": "j1", "kind": "join"}]} if deny else {}
    return _base("join-failed" if deny else "join", [AC], script, **extra)


def cc_transfer(dx: int = 7, deny: str | None = None, max_rounds: int = 9,
                **extra: Any) -> Scenario:
    fields = {"sid": "t1", "beta_ac": "ac", "beta_bd": "bd", "dx": dx, "hub": "H"}
    script = [{"round": 1, "party": "A", "kind": "cc-transfer", **fields},
              {"round": 1, "party": "B", "kind": "cc-transfer", **fields}]
    if deny is not None:
        extra["deny"] = [{"party": deny, "sid": "t1", "kind": "gcc"}]
    return _base("cc-transfer", [joined(AC), joined(BD)], script, max_rounds=max_rounds, **extra)


def withdraw(cosign: bool = True, concurrent: bool = False) -> Scenario:
    script = [{"round": 1, "party": "A", "kind": "withdraw", "sid": "w1", "beta": "ac",
               "hub": "H"}]
    if cosign:
        script.append({"round": 1, "party": "C", "kind": "withdraw", "sid": "w1", "beta": "ac",
                       "hub": "H"})
    if concurrent:
        script.append({"round": 1, "party": "C", "kind": "withdraw", "sid": "w2", "beta": "ac",
                       "hub": "H"})
    return _base("withdraw", [joined(AC)], script)


def close(respond: bool = True, in_hub: bool = False) -> Scenario:
    ch = joined(AC) if in_hub else AC
    script = [{"round": 1, "party": "A", "kind": "close", "sid": "c1", "beta": "ac"}]
    if respond:
        script.append({"round": 1, "party": "C", "kind": "close", "sid": "c1", "beta": "ac"})
    return _base("close", [ch], script)


OPERATION_COSTS = {
    "open": (open_channel, (2, 0, 2)),
    "in-channel transfer": (update, (0, 2, 2)),
    "join": (join, (1, 0, 2)),
    "cross-channel transfer": (cc_transfer, (0, 17, 17)),
    "withdraw": (withdraw, (2, 0, 2)),
    "close": (close, (2, 0, 2)),
}


def lifecycle() -> Scenario:
    """Open, pay in-channel, join, pay across channels, withdraw and close."""
    script = [
        {"round": 1, "party": "A", "kind": "open", "sid": "o", "beta": "ac", "counterparty": "C",
         "x": 10},
        {"round": 1, "party": "C", "kind": "open", "sid": "o", "beta": "ac", "x": 15},
        {"round": 4, "party": "C", "kind": "update", "sid": "u", "beta": "ac",
         "shares": {"A": 12, "C": 13}},
        {"round": 7, "party": "A", "kind": "join", "sid": "j", "beta": "ac", "hub": "H"},
        {"round": 10, "party": "A", "kind": "cc-transfer", "sid": "t", "beta_ac": "ac",
         "beta_bd": "bd", "dx": 9, "hub": "H"},
        {"round": 10, "party": "B", "kind": "cc-transfer", "sid": "t", "beta_ac": "ac",
         "beta_bd": "bd", "dx": 9, "hub": "H"},
        {"round": 19, "party": "C", "kind": "withdraw", "sid": "w", "beta": "ac", "hub": "H"},
        {"round": 19, "party": "A", "kind": "withdraw", "sid": "w", "beta": "ac", "hub": "H"},
        {"round": 23, "party": "A", "kind": "close", "sid": "c", "beta": "ac"},
        {"round": 23, "party": "C", "kind": "close", "sid": "c", "beta": "ac"},
        {"round": 23, "party": "D", "kind": "withdraw", "sid": "w2", "beta": "bd", "hub": "H"},
        {"round": 27, "party": "B", "kind": "close", "sid": "c2", "beta": "bd"},
    ]
    return _base("lifecycle", [joined(BD)], script, max_rounds=30)


def two_transfers(back: int = 4) -> Scenario:
    """A pays B, then D pays C back through the same hub."""
    fwd = {"sid": "t1", "beta_ac": "ac", "beta_bd": "bd", "dx": 7, "hub": "H"}
    rev = {"sid": "t2", "beta_ac": "bd", "beta_bd": "ac", "dx": back, "hub": "H"}
    script = [{"round": 1, "party": "A", "kind": "cc-transfer", **fwd},
              {"round": 1, "party": "B", "kind": "cc-transfer", **fwd},
              {"round": 10, "party": "D", "kind": "cc-transfer", **rev},
              {"round": 10, "party": "C", "kind": "cc-transfer", **rev}]
    return _base("two-transfers", [joined(AC), joined(BD)], script, max_rounds=19)


def ignored_requests() -> Scenario:
    """Joining a joined channel, withdrawing an unjoined one, closing a joined one."""
    script = [{"round": 1, "party": "A", "kind": "join", "sid": "j", "beta": "ac", "hub": "H"},
              {"round": 1, "party": "B", "kind": "withdraw", "sid": "w", "beta": "bd", "hub": "H"},
              {"round": 3, "party": "C", "kind": "close", "sid": "c", "beta": "ac"},
              {"round": 3, "party": "A", "kind": "close", "sid": "c", "beta": "ac"}]
    return _base("ignored", [joined(AC), BD], script)


def stale_complaint() -> Scenario:
    """After an in-hub payment, A complains with the distribution it signed before it."""
    script = [{"round": 1, "party": "A", "kind": "update", "sid": "u", "beta": "ac",
               "shares": {"A": 7, "C": 18}},
              {"round": 10, "party": "C", "kind": "withdraw", "sid": "w", "beta": "ac",
               "hub": "H"},
              {"round": 14, "party": "C", "kind": "close", "sid": "c", "beta": "ac"}]
    adversary = {"corrupted": ["A"], "directives": [
        {"round": 4, "action": "inject", "party": "A", "what": "fr-stale", "target": "H"}]}
    return _base("stale-complaint", [joined(AC)], script, max_rounds=18, adversary=adversary)


def corpus() -> dict[str, Scenario]:
    """All-honest scenarios covering every branch of the reference functionality."""
    return {
        "open": open_channel(),
        "open-failed": open_channel(confirm=False),
        "open-insufficient": open_channel(x_a=500),
        "update": update(),
        "update-refused": update(deny=True),
        "update-bad-sum": update(shares={"A": 7, "C": 19}),
        "update-in-hub": update(in_hub=True),
        "join": join(),
        "join-failed": join(deny=True),
        "cc-transfer": cc_transfer(),
        "cc-full-balance": cc_transfer(dx=10),
        "cc-refused-by-C": cc_transfer(deny="C", max_rounds=16),
        "cc-refused-by-D": cc_transfer(deny="D", max_rounds=16),
        "cc-insufficient": cc_transfer(dx=11, max_rounds=16),
        "withdraw": withdraw(),
        "withdraw-unilateral": withdraw(cosign=False),
        "withdraw-failed": withdraw(concurrent=True),
        "close": close(),
        "close-unilateral": close(respond=False),
        "close-while-joined": close(in_hub=True),
        "ignored": ignored_requests(),
        "two-transfers": two_transfers(),
        "lifecycle": lifecycle(),
    }
