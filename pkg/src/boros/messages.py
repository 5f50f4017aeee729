"""Wire messages exchanged between parties, the contract and hubs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .core import AccountId, Signature, encode

# Messages whose signature doubles as a signature over the carried distribution.
DIST_SIGNED = frozenset({"updating", "update-ok", "icu", "conf", "fr-reply"})
JOIN_SIGNED = frozenset({"join-req", "join"})


@dataclass(frozen=True)
class Message:
    kind: str
    sid: bytes
    sender: AccountId
    to: AccountId
    body: Mapping[str, Any] = field(default_factory=dict)
    sigs: tuple[Signature, ...] = ()

    def __getitem__(self, key: str) -> Any:
        return self.body[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self.body.get(key, default)

    def canonical(self):
        return (self.kind, self.sid, self.sender, body_items(self.body), self.sigs)

    def channels(self) -> tuple[AccountId, ...]:
        return tuple(self.body[k] for k in ("beta", "beta_ac", "beta_bd")
                     if isinstance(self.body.get(k), AccountId))

    def readdressed(self, to: AccountId) -> "Message":
        return Message(self.kind, self.sid, self.sender, to, self.body, self.sigs)

    def replace(self, **changes: Any) -> "Message":
        """Copy with some body fields changed; signatures are kept as-is."""
        body = dict(self.body)
        body.update(changes)
        return Message(self.kind, self.sid, self.sender, self.to, body, self.sigs)

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "sid": self.sid.decode(errors="replace"),
            "from": str(self.sender),
            "to": str(self.to),
            "fields": {k: _describe(v) for k, v in sorted(self.body.items())},
            "sigs": len(self.sigs),
        }


def body_items(body: Mapping[str, Any]) -> tuple:
    return tuple((k, body[k]) for k in sorted(body))


def _describe(value: Any) -> Any:
    if isinstance(value, Message):
        return {"kind": value.kind, "from": str(value.sender)}
    if isinstance(value, AccountId):
        return str(value)
    if isinstance(value, bytes):
        return value.hex()
    if hasattr(value, "describe"):
        return value.describe()
    if isinstance(value, (tuple, list)):
        return [_describe(v) for v in value]
    return value


def signing_payload(kind: str, sid: bytes, sender: AccountId, body: Mapping[str, Any],
                    to: AccountId | None = None) -> bytes:
    """Bytes a sender signs for a message of this kind.

    Distribution and join signatures double as evidence, so they cover only the
    agreed state; every other signature also binds the recipient.
    """
    if kind in DIST_SIGNED:
        return body["theta"].payload(body["beta"])
    if kind in JOIN_SIGNED:
        return encode("join", sid, body["beta"], body["hub"], body["c"], body["theta"])
    return encode(kind, sid, sender, to, body_items(body))


def make(keyring, kind: str, sid: bytes, sender: AccountId, to: AccountId,
         sign: bool = True, extra_sigs: tuple[Signature, ...] = (), **body: Any) -> Message:
    """Build a message, signing it with the sender's key when ``sign`` is set."""
    sigs = tuple(extra_sigs)
    if sign:
        sigs += (keyring.sign(sender, signing_payload(kind, sid, sender, body, to)),)
    return Message(kind, sid, sender, to, body, sigs)


def sender_signed(keyring, msg: Message) -> bool:
    """True if the message carries a valid signature of its sender."""
    try:
        payload = signing_payload(msg.kind, msg.sid, msg.sender, msg.body, msg.to)
    except (KeyError, AttributeError, TypeError, ValueError):
        return False
    return any(keyring.verify(msg.sender, payload, s) for s in msg.sigs)
