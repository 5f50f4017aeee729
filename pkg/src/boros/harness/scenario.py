"""Scenario description: parties, initial channels, environment script, adversary."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..core import AccountId, BorosError, coins, session_id


class MalformedScenario(BorosError):
    pass


@dataclass
class ChannelSetup:
    name: str
    a: str
    c: str
    shares: dict[str, int]
    version: int = 1
    hub: str | None = None  # joined to this hub at setup

    @property
    def capacity(self) -> int:
        return sum(self.shares.values())


@dataclass
class Step:
    """One environment input: in ``round``, ``party`` receives ``kind`` with ``fields``."""

    round: int
    party: str
    kind: str
    sid: str
    fields: dict[str, Any] = field(default_factory=dict)


@dataclass
class Directive:
    round: int
    action: str  # drop | replace | inject | silence
    party: str
    match: dict[str, Any] = field(default_factory=dict)
    mutation: str | None = None
    what: str | None = None
    target: str | None = None
    until: int | None = None


@dataclass
class AdversaryScript:
    corrupted: frozenset[str] = frozenset()
    directives: list[Directive] = field(default_factory=list)


@dataclass
class Params:
    T: int = 10
    delta: int = 2
    max_rounds: int = 12


@dataclass
class Scenario:
    name: str
    seed: int
    parties: dict[str, int]  # name -> initial ledger balance
    hubs: list[str]
    channels: list[ChannelSetup]
    script: list[Step]
    deny: set[tuple[str, str, str]] = field(default_factory=set)
    adversary: AdversaryScript = field(default_factory=AdversaryScript)
    params: Params = field(default_factory=Params)

    def validate(self) -> "Scenario":
        names = list(self.parties) + list(self.hubs) + [ch.name for ch in self.channels]
        if len(set(names)) != len(names):
            raise MalformedScenario("party, hub and channel names must be distinct")
        if not 0 <= self.seed < 2**64:
            raise MalformedScenario("seed must be a 64-bit unsigned integer")
        for bal in self.parties.values():
            coins(bal)
        for ch in self.channels:
            if ch.a not in self.parties or ch.c not in self.parties or ch.a == ch.c:
                raise MalformedScenario(f"channel {ch.name} needs two distinct known parties")
            if set(ch.shares) != {ch.a, ch.c}:
                raise MalformedScenario(f"channel {ch.name} shares must name its two parties")
            if ch.hub is not None and ch.hub not in self.hubs:
                raise MalformedScenario(f"channel {ch.name} names unknown hub {ch.hub}")
        for st in self.script:
            if st.party not in self.parties:
                raise MalformedScenario(f"script step for unknown party {st.party}")
            if not 1 <= st.round <= self.params.max_rounds:
                raise MalformedScenario(f"script step outside rounds 1..{self.params.max_rounds}")
        unknown = set(self.adversary.corrupted) - set(self.parties)
        if unknown:
            raise MalformedScenario(f"cannot corrupt unknown parties {sorted(unknown)}")
        return self

    @property
    def honest(self) -> list[str]:
        return [p for p in self.parties if p not in self.adversary.corrupted]


def account(name: str) -> AccountId:
    return AccountId.named(name)


def resolve_fields(fields: Mapping[str, Any]) -> dict[str, Any]:
    """Turn names in a script step into account ids."""
    out: dict[str, Any] = {}
    for k, v in fields.items():
        if k in ("beta", "beta_ac", "beta_bd", "hub", "counterparty"):
            out[k] = account(v)
        elif k == "shares":
            out[k] = {account(p): coins(x) for p, x in v.items()}
        else:
            out[k] = v
    return out


def initiators(script: list[Step]) -> dict[str, str]:
    """The first party to receive an input for a session initiates it."""
    first: dict[str, str] = {}
    for st in sorted(script, key=lambda s: s.round):
        first.setdefault(st.sid, st.party)
    return first


# -- loading -----------------------------------------------------------------


def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise MalformedScenario(f"{where}: missing '{key}'")
    return d[key]


def from_dict(d: Mapping[str, Any]) -> Scenario:
    if not isinstance(d, Mapping):
        raise MalformedScenario("scenario must be a mapping")
    try:
        params = Params(**d.get("params", {}))
        channels = [ChannelSetup(name=_require(c, "name", "channel"), a=_require(c, "a", "channel"),
                                c=_require(c, "c", "channel"),
                                shares=dict(_require(c, "shares", "channel")),
                                version=c.get("version", 1), hub=c.get("hub"))
                    for c in d.get("channels", [])]
        script = []
        for s in d.get("script", []):
            s = dict(s)
            rnd, party, kind, sid = (s.pop("round"), s.pop("party"), s.pop("kind"), s.pop("sid"))
            session_id(sid)
            script.append(Step(rnd, party, kind, sid, s))
        adv = d.get("adversary") or {}
        directives = [Directive(**x) for x in adv.get("directives", [])]
        deny = {(x["party"], x["sid"], x["kind"]) for x in d.get("deny", [])}
        parties = d.get("parties", {})
        if isinstance(parties, list):
            parties = {p: 0 for p in parties}
        scenario = Scenario(name=d.get("name", "scenario"), seed=int(d.get("seed", 0)),
                            parties=dict(parties), hubs=list(d.get("hubs", [])),
                            channels=channels, script=script, deny=deny,
                            adversary=AdversaryScript(frozenset(adv.get("corrupted", [])),
                                                      directives),
                            params=params)
        return scenario.validate()
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedScenario(str(exc)) from exc


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh))


def to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "name": s.name,
        "seed": s.seed,
        "parties": dict(s.parties),
        "hubs": list(s.hubs),
        "channels": [{"name": c.name, "a": c.a, "c": c.c, "shares": dict(c.shares),
                      "version": c.version, **({"hub": c.hub} if c.hub else {})}
                     for c in s.channels],
        "script": [{"round": st.round, "party": st.party, "kind": st.kind, "sid": st.sid,
                    **st.fields} for st in s.script],
        "deny": [{"party": p, "sid": sid, "kind": k} for p, sid, k in sorted(s.deny)],
        "adversary": {
            "corrupted": sorted(s.adversary.corrupted),
            "directives": [{k: v for k, v in vars(d).items() if v not in (None, {})}
                           for d in s.adversary.directives],
        },
        "params": vars(s.params).copy(),
    }
