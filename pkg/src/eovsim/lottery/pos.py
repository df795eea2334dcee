"""Proof of stake: weighted validator lottery, coin age, deposits and slashing."""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field

from ..codec import encode
from ..crypto import H
from ..ledger import IdentityRegistry, Signature, Signer

RELATIVE_VALUE, COIN_AGE = "relative-value", "coin-age"


class NoEligibleValidator(LookupError):
    pass


@dataclass
class ValidatorStake:
    coins: int
    acquired_at: int = 0
    deposit: int = 0
    slashed: bool = False


@dataclass
class StakeLedger:
    validators: dict[str, ValidatorStake] = field(default_factory=dict)
    ticks_per_day: int = 1
    audit: list[str] = field(default_factory=list)

    def lock(self, validator: str, coins: int, deposit: int, now: int = 0) -> None:
        """Register ``validator``; its deposit stays locked while it validates."""
        self.validators[validator] = ValidatorStake(coins, now, deposit)

    def eligible(self) -> list[str]:
        return sorted(v for v, s in self.validators.items() if not s.slashed and s.coins > 0)

    def held_days(self, validator: str, now: int) -> int:
        return max(0, now - self.validators[validator].acquired_at) // self.ticks_per_day

    def weight(self, validator: str, mode: str, now: int = 0) -> int:
        s = self.validators[validator]
        if s.slashed:
            return 0
        if mode == RELATIVE_VALUE:
            # coins / total; the common denominator cancels in the draw.
            return s.coins
        if mode == COIN_AGE:
            return coin_age(s.coins, self.held_days(validator, now))
        raise ValueError(f"unknown selection mode {mode!r}")

    def relative_value(self, validator: str) -> float:
        total = sum(s.coins for s in self.validators.values() if not s.slashed)
        return self.validators[validator].coins / total if total else 0.0

    def record_selection(self, validator: str, now: int) -> None:
        """Coin age restarts once the coins have been used to validate."""
        self.validators[validator].acquired_at = now

    def settle(self, validator: str, fee: int) -> int:
        """Deposit back plus the flat fee for a correctly validated block."""
        s = self.validators[validator]
        if s.slashed:
            return 0
        return s.deposit + fee


def coin_age(coins: int, held_days: int) -> int:
    return coins * held_days


def weighted_choice(items: list[str], weights: list[int], rng: random.Random) -> str:
    total = sum(weights)
    if total <= 0:
        raise NoEligibleValidator("no validator with positive weight")
    cumulative, acc = [], 0
    for w in weights:
        acc += w
        cumulative.append(acc)
    r = rng.randrange(total)
    return items[bisect.bisect_right(cumulative, r)]


def select_validator_pos(stake: StakeLedger, mode: str, seed: int | random.Random, now: int = 0) -> str:
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    ids = stake.eligible()
    if not ids:
        raise NoEligibleValidator("empty eligible set")
    return weighted_choice(ids, [stake.weight(v, mode, now) for v in ids], rng)


# -- equivocation evidence -----------------------------------------------------


@dataclass(frozen=True)
class SignedHeader:
    producer: str
    height: int
    parent: bytes
    body: bytes
    signature: Signature | None = None

    def signing_bytes(self) -> bytes:
        return encode((self.producer, self.height, self.parent, self.body))

    @property
    def block_hash(self) -> bytes:
        return H(self.signing_bytes())


def sign_header(signer: Signer, height: int, parent: bytes, body: bytes = b"") -> SignedHeader:
    unsigned = SignedHeader(signer.id, height, parent, body)
    return SignedHeader(signer.id, height, parent, body, signer.sign(unsigned.signing_bytes()))


def check_evidence(registry: IdentityRegistry, validator: str, a: SignedHeader, b: SignedHeader) -> str | None:
    """Reason the evidence is invalid, or ``None`` if it proves a double-sign."""
    for h in (a, b):
        if h.producer != validator or h.signature is None or h.signature.signer != validator:
            return "evidence not signed by the accused validator"
        if not registry.verify(h.signature, h.signing_bytes()):
            return "bad signature on evidence"
    if a.height != b.height:
        return "evidence blocks at different heights"
    if a.parent == b.parent:
        return "evidence blocks share a parent"
    return None


def slash(stake: StakeLedger, registry: IdentityRegistry, validator: str, evidence: tuple[SignedHeader, SignedHeader]) -> bool:
    """Forfeit the deposit and exclude ``validator``; invalid evidence is audited and ignored."""
    if validator not in stake.validators:
        stake.audit.append(f"rejected: unknown validator {validator}")
        return False
    reason = check_evidence(registry, validator, *evidence)
    if reason is not None:
        stake.audit.append(f"rejected: {validator}: {reason}")
        return False
    s = stake.validators[validator]
    stake.audit.append(f"slashed: {validator}: deposit {s.deposit} forfeited")
    s.deposit = 0
    s.slashed = True
    return True
