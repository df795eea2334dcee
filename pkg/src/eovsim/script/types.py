"""Script types, runtime values and the spending context."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

NUMBER_MIN, NUMBER_MAX = -2147483647, 2147483647
LOCKTIME_THRESHOLD = 500_000_000  # below: block height, at or above: unix timestamp
SEQUENCE_GRANULARITY = 512  # seconds
MAX_HASH_NESTING = 2

BASE_TYPES = ("Bytes", "PublicKey", "Signature", "Time", "Duration", "Boolean", "Number", "Value")
HASH_TYPES = ("Sha256", "Sha1", "Ripemd160")


@dataclass(frozen=True)
class HashType:
    fn: str  # one of HASH_TYPES
    inner: "Type"

    def __str__(self) -> str:
        return f"{self.fn}({self.inner})"


@dataclass(frozen=True)
class ListType:
    elem: "Type"

    def __str__(self) -> str:
        return f"[{self.elem}]"


Type = str | HashType | ListType


def hash_depth(t: Type) -> int:
    return 1 + hash_depth(t.inner) if isinstance(t, HashType) else 0


def is_hashable(t: Type) -> bool:
    return t in ("Bytes", "PublicKey") or isinstance(t, HashType)


@dataclass(frozen=True)
class TimeValue:
    n: int

    @property
    def kind(self) -> str:
        return "height" if self.n < LOCKTIME_THRESHOLD else "timestamp"


@dataclass(frozen=True)
class DurationValue:
    n: int
    unit: str = "blocks"  # or "seconds"

    def __post_init__(self):
        if self.unit not in ("blocks", "seconds"):
            raise ValueError(f"unknown duration unit {self.unit!r}")
        if self.n < 0:
            raise ValueError("duration must be non-negative")
        if self.unit == "seconds" and self.n % SEQUENCE_GRANULARITY:
            raise ValueError(f"duration in seconds must be a multiple of {SEQUENCE_GRANULARITY}")


def number_in_range(n: int) -> bool:
    return NUMBER_MIN <= n <= NUMBER_MAX


def conforms(value, t: Type) -> bool:
    """Does a runtime ``value`` inhabit type ``t``?"""
    if t in ("Bytes", "PublicKey", "Signature") or isinstance(t, HashType):
        return isinstance(value, bytes)
    if t == "Boolean":
        return isinstance(value, bool)
    if t == "Number":
        return type(value) is int and number_in_range(value)
    if t == "Value":
        return type(value) is int and value >= 0
    if t == "Time":
        return isinstance(value, TimeValue)
    if t == "Duration":
        return isinstance(value, DurationValue)
    return False


Verifier = Callable[[bytes, bytes, bytes], bool]


@dataclass(frozen=True)
class SpendingContext:
    """Everything a script may observe about the spending transaction; nothing else."""

    current_height: int
    current_time: int
    utxo_age_blocks: int
    utxo_age_seconds: int
    tx_digest: bytes
    verifier: Verifier

    def check_signature(self, public_key: bytes, signature: bytes) -> bool:
        return bool(self.verifier(public_key, signature, self.tx_digest))


def default_verifier(public_key: bytes, signature: bytes, digest: bytes) -> bool:
    from ..crypto import scheme

    return scheme().verify(public_key, digest, signature)


@dataclass(frozen=True)
class ScriptResult:
    unlocked: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.unlocked


UNLOCKED = ScriptResult(True)


def locked(reason: str) -> ScriptResult:
    return ScriptResult(False, reason)
