"""Single-node sequencer."""

from __future__ import annotations

from ..ledger import Block, BlockStore, ChannelConfig, TransactionEnvelope
from ..netsim import Send, Timer
from .base import Broadcast, DeliverBlock, OrderingConfig, OrdererStats, PendingPool, may_broadcast


class SoloOrderer:
    """Cuts blocks from one pending pool; usable directly or as a netsim node."""

    def __init__(self, node_id: str, genesis: Block, subscribers=(), config: OrderingConfig | None = None):
        self.node_id = node_id
        self.channel = genesis.config
        self.registry = self.channel.registry()
        self.config = config or OrderingConfig.from_channel(self.channel)
        self.subscribers = tuple(subscribers)
        self.ledger = BlockStore()
        self.ledger.append_block(genesis)
        self.pool = PendingPool()
        self.ordered_ids: set[bytes] = set()
        self.stats = OrdererStats()

    # -- direct API --------------------------------------------------------

    def broadcast(self, tx: TransactionEnvelope, now: int = 0) -> bool:
        if not may_broadcast(self.channel, self.registry, tx.client):
            self.stats.rejected.add(tx.tx_id)
            return False
        self.stats.accepted.add(tx.tx_id)
        if tx.tx_id not in self.ordered_ids:
            self.pool.add(tx, now)
        return True

    def tick(self, now: int, force: bool = False) -> list[Block]:
        """Cut every batch that is due at ``now``; ``force`` flushes the pool."""
        cut = []
        while self.pool and (force or self.pool.ready(now, self.config.batch_max_txs, self.config.batch_timeout)):
            cut.append(self._append(self.pool.take(self.config.batch_max_txs)))
        return cut

    def _append(self, txs) -> Block:
        block = Block(self.ledger.height + 1, self.ledger.tip_hash(), tuple(txs))
        self.ledger.append_block(block)
        self.ordered_ids.update(tx.tx_id for tx in txs)
        return block

    def append_config(self, config: ChannelConfig) -> Block:
        block = Block(self.ledger.height + 1, self.ledger.tip_hash(), (), config)
        self.ledger.append_block(block)
        self.channel = config
        self.registry = config.registry()
        return block

    def deliver(self, s: int) -> Block | None:
        """Block ``s``, or ``None`` while it does not exist yet."""
        if s < 0:
            raise ValueError("sequence numbers are non-negative")
        return self.ledger.get(s)

    @property
    def delivered(self) -> list[Block]:
        return self.ledger.blocks()

    # -- netsim node -------------------------------------------------------

    def start(self):
        return [Timer(1, "tick")]

    def _push(self, blocks):
        return [Send(sub, DeliverBlock(b)) for b in blocks for sub in self.subscribers]

    def on_message(self, now, src, msg):
        if isinstance(msg, Broadcast):
            self.broadcast(msg.tx, now)
            if len(self.pool) >= self.config.batch_max_txs:
                return self._push(self.tick(now))
        return []

    def on_timer(self, now, payload):
        return self._push(self.tick(now)) + [Timer(1, "tick")]

    def on_recover(self, now):
        return [Timer(1, "tick")]
