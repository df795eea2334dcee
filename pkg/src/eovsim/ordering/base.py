"""Ordering configuration, block cutting, and the messages orderers exchange."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

from ..ledger import (
    REGISTERED_BACKENDS,
    Block,
    ChannelConfig,
    IdentityRegistry,
    InvalidConfigError,
    TransactionEnvelope,
)
from ..policy import evaluate, parse_policy

BROADCAST_RULE = "broadcast"
DELIVER_RULE = "deliver"


@dataclass(frozen=True)
class OrderingConfig:
    backend: str
    batch_max_txs: int
    batch_timeout: int
    orderer_nodes: tuple[str, ...]
    f_tolerated: int = 0

    def __post_init__(self):
        object.__setattr__(self, "orderer_nodes", tuple(self.orderer_nodes))
        self.validate()

    def validate(self) -> None:
        if self.backend not in REGISTERED_BACKENDS:
            raise InvalidConfigError("backend", f"unregistered backend {self.backend!r}")
        if self.batch_max_txs < 1:
            raise InvalidConfigError("batch_max_txs", "must be >= 1")
        if self.batch_timeout < 1:
            raise InvalidConfigError("batch_timeout", "must be >= 1 tick")
        if not self.orderer_nodes or len(set(self.orderer_nodes)) != len(self.orderer_nodes):
            raise InvalidConfigError("orderer_nodes", "need one or more distinct node ids")
        if self.backend == "solo" and len(self.orderer_nodes) != 1:
            raise InvalidConfigError("orderer_nodes", "solo ordering runs exactly one node")
        if self.backend == "cft-replicated" and len(self.orderer_nodes) < 2 * self.f_tolerated + 1:
            raise InvalidConfigError(
                "orderer_nodes", f"f={self.f_tolerated} needs >= {2 * self.f_tolerated + 1} orderers"
            )

    @classmethod
    def from_channel(cls, config: ChannelConfig) -> "OrderingConfig":
        c = config.consensus
        return cls(
            backend=config.backend,
            batch_max_txs=int(c.get("batch_max_txs", 10)),
            batch_timeout=int(c.get("batch_timeout", 5)),
            orderer_nodes=tuple(config.orderers),
            f_tolerated=int(c.get("f_tolerated", 0)),
        )


@dataclass(frozen=True)
class OrderedBatch:
    seq: int
    txs: tuple[TransactionEnvelope, ...]


def cut_block(pool: Sequence[TransactionEnvelope], batch_max: int, seq: int) -> tuple[OrderedBatch | None, list]:
    """Take up to ``batch_max`` txs from the head of ``pool``.

    Returns ``(batch, remaining)``; an empty pool yields no batch.
    """
    if not pool:
        return None, []
    head = tuple(pool[:batch_max])
    return OrderedBatch(seq, head), list(pool[batch_max:])


class PendingPool:
    """Arrival-ordered, tx-id-deduplicated pool of transactions awaiting ordering."""

    def __init__(self) -> None:
        self._txs: dict[bytes, TransactionEnvelope] = {}
        self._since: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self._txs)

    def __contains__(self, tx_id: bytes) -> bool:
        return tx_id in self._txs

    def add(self, tx: TransactionEnvelope, now: int) -> bool:
        if tx.tx_id in self._txs:
            return False
        self._txs[tx.tx_id] = tx
        self._since[tx.tx_id] = now
        return True

    def discard(self, tx_id: bytes) -> None:
        self._txs.pop(tx_id, None)
        self._since.pop(tx_id, None)

    def oldest(self) -> int | None:
        return min(self._since.values()) if self._since else None

    def ready(self, now: int, batch_max: int, batch_timeout: int) -> bool:
        if len(self._txs) >= batch_max:
            return True
        oldest = self.oldest()
        return oldest is not None and now - oldest >= batch_timeout

    def txs(self) -> list[TransactionEnvelope]:
        return list(self._txs.values())

    def take(self, batch_max: int) -> list[TransactionEnvelope]:
        batch, _ = cut_block(self.txs(), batch_max, 0)
        if batch is None:
            return []
        for tx in batch.txs:
            self.discard(tx.tx_id)
        return list(batch.txs)


def may_broadcast(config: ChannelConfig, registry: IdentityRegistry, client: str) -> bool:
    rule = config.access_rules.get(BROADCAST_RULE)
    ident = registry.get(client)
    if ident is None:
        return False
    return rule is None or evaluate(parse_policy(rule), [ident])


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class Broadcast:
    tx: TransactionEnvelope

    def describe(self) -> str:
        return f"broadcast {self.tx.tx_id.hex()[:12]}"


@dataclass(frozen=True)
class Forward:
    txs: tuple[TransactionEnvelope, ...]

    def describe(self) -> str:
        return f"forward n={len(self.txs)}"


@dataclass(frozen=True)
class AppendEntries:
    term: int
    leader: str
    prev_index: int
    prev_term: int
    entries: tuple[tuple[int, Any], ...]
    commit: int

    def describe(self) -> str:
        return f"append t={self.term} prev={self.prev_index} n={len(self.entries)} c={self.commit}"


@dataclass(frozen=True)
class AppendAck:
    term: int
    node: str
    success: bool
    match: int

    def describe(self) -> str:
        return f"ack t={self.term} ok={int(self.success)} m={self.match}"


@dataclass(frozen=True)
class VoteRequest:
    term: int
    candidate: str
    last_index: int
    last_term: int

    def describe(self) -> str:
        return f"vote-request t={self.term} li={self.last_index} lt={self.last_term}"


@dataclass(frozen=True)
class VoteGrant:
    term: int
    voter: str
    granted: bool

    def describe(self) -> str:
        return f"vote-grant t={self.term} g={int(self.granted)}"


@dataclass(frozen=True)
class DeliverBlock:
    block: Block

    def describe(self) -> str:
        return f"deliver {self.block.seq} {self.block.block_hash.hex()[:12]}"


@dataclass
class OrdererStats:
    accepted: set[bytes] = field(default_factory=set)
    rejected: set[bytes] = field(default_factory=set)
