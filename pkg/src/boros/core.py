"""Accounts, coins, canonical encoding, signatures and the global ledger."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

ADDRESS_BYTES = 20  # 160-bit account ids
MAX_COINS = 2**64 - 1
DIGEST_BYTES = 32


class BorosError(Exception):
    """Base class for every error raised by the simulator."""


class InsufficientFunds(BorosError):
    pass


class UnknownAccount(BorosError):
    pass


class UnknownSigner(BorosError):
    pass


class CoinOverflow(BorosError):
    pass


@dataclass(frozen=True, order=True)
class AccountId:
    """A 160-bit address shared by external and contract accounts.

    ``label`` is a human-readable tag for traces; identity is ``raw`` only.
    """

    raw: bytes
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not isinstance(self.raw, bytes) or len(self.raw) != ADDRESS_BYTES:
            raise ValueError(f"account id must be {ADDRESS_BYTES} bytes")

    @classmethod
    def named(cls, label: str) -> "AccountId":
        raw = hashlib.sha256(b"boros/account/" + label.encode()).digest()[:ADDRESS_BYTES]
        return cls(raw, label)

    def __str__(self) -> str:
        return self.label or self.raw.hex()

    def __repr__(self) -> str:
        return f"AccountId({self})"


def coins(amount: int) -> int:
    """Validate a coin amount: a non-negative integer that fits in 64 bits."""
    if isinstance(amount, bool) or not isinstance(amount, int):
        raise TypeError(f"coin amount must be int, got {type(amount).__name__}")
    if amount < 0:
        raise ValueError(f"negative coin amount {amount}")
    if amount > MAX_COINS:
        raise CoinOverflow(f"coin amount {amount} exceeds 64 bits")
    return amount


def add_coins(a: int, b: int) -> int:
    total = a + b
    if total > MAX_COINS:
        raise CoinOverflow(f"{a} + {b} overflows")
    return total


def session_id(text: str | bytes) -> bytes:
    sid = text.encode() if isinstance(text, str) else bytes(text)
    if not sid:
        raise ValueError("session id must be non-empty")
    return sid


# -- canonical encoding ------------------------------------------------------
#
# Every field is a one-byte type tag followed by a length-prefixed body.
# Integers are 8-byte big-endian; sequences are a count followed by items.

_TAG_BYTES = b"b"
_TAG_STR = b"s"
_TAG_INT = b"i"
_TAG_SEQ = b"l"
_TAG_NONE = b"n"
_TAG_ACCT = b"a"
_TAG_BOOL = b"t"


def _encode_one(value: Any, out: list[bytes]) -> None:
    if value is None:
        out.append(_TAG_NONE)
    elif isinstance(value, bool):
        out.append(_TAG_BOOL + (b"\x01" if value else b"\x00"))
    elif isinstance(value, AccountId):
        out.append(_TAG_ACCT + value.raw)
    elif isinstance(value, int):
        if value < 0 or value > MAX_COINS:
            raise ValueError(f"integer {value} outside canonical range")
        out.append(_TAG_INT + value.to_bytes(8, "big"))
    elif isinstance(value, (bytes, bytearray)):
        out.append(_TAG_BYTES + len(value).to_bytes(4, "big") + bytes(value))
    elif isinstance(value, str):
        data = value.encode()
        out.append(_TAG_STR + len(data).to_bytes(4, "big") + data)
    elif isinstance(value, (tuple, list)):
        out.append(_TAG_SEQ + len(value).to_bytes(4, "big"))
        for item in value:
            _encode_one(item, out)
    elif hasattr(value, "canonical"):
        _encode_one(value.canonical(), out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def encode(*fields: Any) -> bytes:
    """Canonical byte serialization of a signable payload."""
    out: list[bytes] = []
    _encode_one(list(fields), out)
    return b"".join(out)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# -- signatures --------------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    signer: AccountId
    payload_digest: bytes
    tag: bytes

    def canonical(self):
        return (self.signer, self.payload_digest, self.tag)


class Keyring:
    """Deterministic keyed-digest signature scheme.

    Each registered signer owns a secret key; a signature is an HMAC over the
    payload digest. Only holders of the keyring can sign, and anything not
    produced by :meth:`sign` fails :meth:`verify`.
    """

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._keys: dict[AccountId, bytes] = {}
        self.log: list[tuple[AccountId, bytes]] = []

    def register(self, account: AccountId) -> None:
        if account not in self._keys:
            material = encode("boros/key", self._seed, account)
            self._keys[account] = hashlib.sha256(material).digest()

    def knows(self, account: AccountId) -> bool:
        return account in self._keys

    def sign(self, signer: AccountId, payload: bytes) -> Signature:
        key = self._keys.get(signer)
        if key is None:
            raise UnknownSigner(str(signer))
        d = digest(payload)
        self.log.append((signer, payload))
        return Signature(signer, d, hmac.new(key, d, hashlib.sha256).digest())

    def verify(self, signer: AccountId, payload: bytes, sig: Any) -> bool:
        if not isinstance(sig, Signature) or sig.signer != signer:
            return False
        key = self._keys.get(signer)
        if key is None:
            return False
        d = digest(payload)
        if not hmac.compare_digest(d, sig.payload_digest):
            return False
        return hmac.compare_digest(hmac.new(key, d, hashlib.sha256).digest(), sig.tag)


def sign(keyring: Keyring, signer: AccountId, payload: bytes) -> Signature:
    return keyring.sign(signer, payload)


def verify(keyring: Keyring, signer: AccountId, payload: bytes, sig: Any) -> bool:
    return keyring.verify(signer, payload, sig)


# -- ledger ------------------------------------------------------------------


@dataclass
class LedgerState:
    """The global account space: account id -> balance."""

    accounts: dict[AccountId, int] = field(default_factory=dict)

    @classmethod
    def from_balances(cls, balances: Mapping[AccountId, int]) -> "LedgerState":
        return cls({acct: coins(v) for acct, v in balances.items()})

    def balance(self, account: AccountId) -> int:
        return self.accounts.get(account, 0)

    def total(self) -> int:
        return sum(self.accounts.values())

    def transfer(self, sid: bytes, src: AccountId, dst: AccountId, amount: int) -> None:
        """Move ``amount`` coins in place. Raises without side effects on failure."""
        coins(amount)
        if src not in self.accounts:
            raise UnknownAccount(str(src))
        have = self.accounts[src]
        if have < amount:
            raise InsufficientFunds(f"{src} has {have}, needs {amount} (sid={sid!r})")
        if src == dst:
            return
        new_dst = add_coins(self.accounts.get(dst, 0), amount)
        self.accounts[src] = have - amount
        self.accounts[dst] = new_dst

    def copy(self) -> "LedgerState":
        return LedgerState(dict(self.accounts))

    def snapshot(self, accounts: Iterable[AccountId] | None = None) -> dict[str, int]:
        keys = sorted(self.accounts) if accounts is None else list(accounts)
        return {str(a): self.balance(a) for a in keys}


def ledger_transfer(state: LedgerState, sid: bytes, src: AccountId, dst: AccountId,
                    p: int) -> LedgerState:
    """Pure variant of :meth:`LedgerState.transfer`; ``state`` is left untouched."""
    new = state.copy()
    new.transfer(sid, src, dst, p)
    return new
