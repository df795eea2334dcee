"""Leader-based crash-fault-tolerant replicated log of blocks.

Each log entry is ``(term, block)``; ``block`` is ``None`` for the no-op a
new leader appends to commit entries left over from earlier terms. Index 0
holds the genesis block and is committed from the start. An entry commits
once a majority stores it and it belongs to the leader's current term (or
precedes such an entry). Committed blocks form the orderer's ledger.

Term, vote, log and pending pool survive a crash; role and leader state do
not. Election timeouts are ``election_base + rank * election_step`` where
``rank`` is the node's position in the sorted cluster, so among equally
up-to-date candidates the lowest id times out first and wins.
"""

from __future__ import annotations

from ..ledger import Block, BlockStore, TransactionEnvelope
from ..netsim import Send, Timer
from .base import (
    AppendAck,
    AppendEntries,
    Broadcast,
    DeliverBlock,
    Forward,
    OrderingConfig,
    OrdererStats,
    PendingPool,
    VoteGrant,
    VoteRequest,
    may_broadcast,
)

FOLLOWER, CANDIDATE, LEADER = "follower", "candidate", "leader"
MAX_ENTRIES_PER_APPEND = 32
FORWARD_RETRY = 10  # ticks before a still-pooled tx is forwarded again


class CFTOrderer:
    def __init__(
        self,
        node_id: str,
        genesis: Block,
        config: OrderingConfig | None = None,
        subscribers=(),
        heartbeat: int = 2,
        election_base: int = 8,
        election_step: int = 3,
    ):
        self.node_id = node_id
        self.channel = genesis.config
        self.registry = self.channel.registry()
        self.config = config or OrderingConfig.from_channel(self.channel)
        self.cluster = tuple(sorted(self.config.orderer_nodes))
        if node_id not in self.cluster:
            raise ValueError(f"{node_id} is not in the orderer cluster")
        self.peers = tuple(n for n in self.cluster if n != node_id)
        self.majority = len(self.cluster) // 2 + 1
        self.subscribers = tuple(subscribers)
        self.heartbeat = heartbeat
        self.election_timeout = election_base + self.cluster.index(node_id) * election_step

        # durable
        self.term = 0
        self.voted_for: str | None = None
        self.log: list[tuple[int, Block | None]] = [(0, genesis)]
        self.pool = PendingPool()
        self.ledger = BlockStore()
        self.ledger.append_block(genesis)
        self.commit_index = 0
        self.stats = OrdererStats()

        # volatile
        self.role = FOLLOWER
        self.leader: str | None = None
        self.votes: set[str] = set()
        self.last_heard = 0
        self.last_sent = -(10**9)
        self.next_index: dict[str, int] = {}
        self.match_index: dict[str, int] = {}
        self.forwarded: dict[tuple[str, int, bytes], int] = {}
        self._log_ids: dict[bytes, int] = {}

    # -- log helpers -------------------------------------------------------

    @property
    def last_index(self) -> int:
        return len(self.log) - 1

    def _last_block(self) -> Block:
        for _, block in reversed(self.log):
            if block is not None:
                return block
        raise AssertionError("log lost its genesis")

    def _index_txs(self, entry, delta: int) -> None:
        block = entry[1]
        if block is None:
            return
        for tx in block.txs:
            n = self._log_ids.get(tx.tx_id, 0) + delta
            if n:
                self._log_ids[tx.tx_id] = n
            else:
                self._log_ids.pop(tx.tx_id, None)
            if delta > 0:
                self.pool.discard(tx.tx_id)

    def _append(self, entry) -> None:
        self.log.append(entry)
        self._index_txs(entry, +1)

    def _truncate(self, index: int, now: int) -> None:
        if index <= self.commit_index:
            raise AssertionError(f"{self.node_id} asked to truncate committed entry {index}")
        for entry in self.log[index:]:
            self._index_txs(entry, -1)
            if entry[1] is not None:
                for tx in entry[1].txs:
                    if tx.tx_id not in self._log_ids:
                        self.pool.add(tx, now)
        del self.log[index:]

    def in_log(self, tx_id: bytes) -> bool:
        return tx_id in self._log_ids

    # -- client side -------------------------------------------------------

    def broadcast(self, tx: TransactionEnvelope, now: int) -> bool:
        if not may_broadcast(self.channel, self.registry, tx.client):
            self.stats.rejected.add(tx.tx_id)
            return False
        self.stats.accepted.add(tx.tx_id)
        if not self.in_log(tx.tx_id):
            self.pool.add(tx, now)
        return True

    def deliver(self, s: int) -> Block | None:
        if s < 0:
            raise ValueError("sequence numbers are non-negative")
        return self.ledger.get(s)

    @property
    def delivered(self) -> list[Block]:
        return self.ledger.blocks()

    # -- transitions -------------------------------------------------------

    def start(self):
        self.last_heard = 0
        return [Timer(1, "tick")]

    def on_crash(self, now):
        self.role = FOLLOWER
        self.leader = None
        self.votes = set()
        self.next_index, self.match_index = {}, {}
        self.forwarded = {}

    def on_recover(self, now):
        self.last_heard = now
        return [Timer(1, "tick")]

    def _become_follower(self, term: int) -> None:
        if term > self.term:
            self.term = term
            self.voted_for = None
        self.role = FOLLOWER
        self.votes = set()

    def on_timer(self, now, payload):
        out = []
        if self.role == LEADER:
            if self.pool.ready(now, self.config.batch_max_txs, self.config.batch_timeout):
                self._cut(now)
                out += self._replicate(now)
                out += self._advance_commit(now)
            elif now - self.last_sent >= self.heartbeat:
                out += self._replicate(now)
        elif now - self.last_heard >= self.election_timeout:
            out += self._start_election(now)
        out.append(Timer(1, "tick"))
        return out

    def _start_election(self, now):
        self.term += 1
        self.role = CANDIDATE
        self.voted_for = self.node_id
        self.votes = {self.node_id}
        self.leader = None
        self.last_heard = now
        if len(self.votes) >= self.majority:
            return self._become_leader(now)
        last_term = self.log[-1][0]
        req = VoteRequest(self.term, self.node_id, self.last_index, last_term)
        return [Send(p, req) for p in self.peers]

    def _become_leader(self, now):
        self.role = LEADER
        self.leader = self.node_id
        self.next_index = {p: len(self.log) for p in self.peers}
        self.match_index = {p: 0 for p in self.peers}
        self._append((self.term, None))
        out = self._replicate(now)
        out += self._advance_commit(now)
        return out

    def _cut(self, now) -> None:
        txs = [tx for tx in self.pool.take(self.config.batch_max_txs) if not self.in_log(tx.tx_id)]
        if not txs:
            return
        prev = self._last_block()
        self._append((self.term, Block(prev.seq + 1, prev.block_hash, tuple(txs))))

    def _replicate(self, now):
        self.last_sent = now
        out = []
        for p in self.peers:
            nxt = self.next_index[p]
            prev = nxt - 1
            entries = tuple(self.log[nxt : nxt + MAX_ENTRIES_PER_APPEND])
            out.append(Send(p, AppendEntries(self.term, self.node_id, prev, self.log[prev][0], entries, self.commit_index)))
        return out

    def _advance_commit(self, now):
        for n in range(self.last_index, self.commit_index, -1):
            if self.log[n][0] != self.term:
                break
            acks = 1 + sum(1 for p in self.peers if self.match_index.get(p, 0) >= n)
            if acks >= self.majority:
                return self._commit_to(n)
        return []

    def _commit_to(self, index: int):
        out = []
        index = min(index, self.last_index)
        while self.commit_index < index:
            self.commit_index += 1
            block = self.log[self.commit_index][1]
            if block is None:
                continue
            self.ledger.append_block(block)
            out += [Send(s, DeliverBlock(block)) for s in self.subscribers]
        return out

    def on_message(self, now, src, msg):
        if isinstance(msg, Broadcast):
            return self._on_broadcast(now, msg)
        if isinstance(msg, Forward):
            for tx in msg.txs:
                if not self.in_log(tx.tx_id):
                    self.pool.add(tx, now)
            return self._maybe_cut_now(now)
        if isinstance(msg, AppendEntries):
            return self._on_append(now, msg)
        if isinstance(msg, AppendAck):
            return self._on_ack(now, msg)
        if isinstance(msg, VoteRequest):
            return self._on_vote_request(now, msg)
        if isinstance(msg, VoteGrant):
            return self._on_vote(now, msg)
        return []

    def _on_broadcast(self, now, msg):
        if not self.broadcast(msg.tx, now):
            return []
        if self.role == LEADER:
            return self._maybe_cut_now(now)
        if self.leader is not None:
            return self._forward(now)
        return []

    def _maybe_cut_now(self, now):
        if self.role == LEADER and len(self.pool) >= self.config.batch_max_txs:
            self._cut(now)
            return self._replicate(now) + self._advance_commit(now)
        return []

    def _forward(self, now):
        """Hand pool txs to the current leader; resend those a lost message may have dropped."""
        if self.leader is None or self.leader == self.node_id:
            return []
        fresh = []
        for tx in self.pool.txs():
            key = (self.leader, self.term, tx.tx_id)
            if now - self.forwarded.get(key, -FORWARD_RETRY) >= FORWARD_RETRY:
                self.forwarded[key] = now
                fresh.append(tx)
        return [Send(self.leader, Forward(tuple(fresh)))] if fresh else []

    def _on_append(self, now, m: AppendEntries):
        if m.term < self.term:
            return [Send(m.leader, AppendAck(self.term, self.node_id, False, 0))]
        self._become_follower(m.term)
        self.leader = m.leader
        self.last_heard = now
        if m.prev_index > self.last_index or self.log[m.prev_index][0] != m.prev_term:
            hint = min(m.prev_index, self.last_index + 1) - 1
            return [Send(m.leader, AppendAck(self.term, self.node_id, False, max(hint, self.commit_index)))]
        idx = m.prev_index
        for entry in m.entries:
            idx += 1
            if idx <= self.last_index:
                if self.log[idx][0] == entry[0]:
                    continue
                self._truncate(idx, now)
            self._append(entry)
        match = m.prev_index + len(m.entries)
        out = self._commit_to(min(m.commit, match))
        out.append(Send(m.leader, AppendAck(self.term, self.node_id, True, match)))
        out += self._forward(now)
        return out

    def _on_ack(self, now, m: AppendAck):
        if m.term > self.term:
            self._become_follower(m.term)
            self.leader = None
            return []
        if self.role != LEADER or m.term != self.term:
            return []
        if m.success:
            if m.match > self.match_index.get(m.node, 0):
                self.match_index[m.node] = m.match
            self.next_index[m.node] = max(self.next_index[m.node], m.match + 1)
            out = self._advance_commit(now)
            if self.next_index[m.node] <= self.last_index:
                out += self._replicate_one(m.node)
            return out
        # Back off to the follower's hint and retry at once.
        self.next_index[m.node] = max(1, min(self.next_index[m.node] - 1, m.match + 1))
        return self._replicate_one(m.node)

    def _replicate_one(self, p):
        nxt = self.next_index[p]
        entries = tuple(self.log[nxt : nxt + MAX_ENTRIES_PER_APPEND])
        return [Send(p, AppendEntries(self.term, self.node_id, nxt - 1, self.log[nxt - 1][0], entries, self.commit_index))]

    def _on_vote_request(self, now, m: VoteRequest):
        if m.term > self.term:
            self._become_follower(m.term)
            self.leader = None
        mine = (self.log[-1][0], self.last_index)
        up_to_date = (m.last_term, m.last_index) >= mine
        grant = m.term == self.term and self.voted_for in (None, m.candidate) and up_to_date
        if grant:
            self.voted_for = m.candidate
            self.last_heard = now
        return [Send(m.candidate, VoteGrant(self.term, self.node_id, grant))]

    def _on_vote(self, now, m: VoteGrant):
        if m.term > self.term:
            self._become_follower(m.term)
            self.leader = None
            return []
        if self.role != CANDIDATE or m.term != self.term or not m.granted:
            return []
        self.votes.add(m.voter)
        if len(self.votes) >= self.majority:
            return self._become_leader(now)
        return []


def committed_prefix_agrees(nodes) -> bool:
    """True iff all nodes' committed ledgers agree on their common prefix."""
    ledgers = [n.ledger for n in nodes]
    for s in range(min(len(l) for l in ledgers)):
        if len({l.hash_at(s) for l in ledgers}) != 1:
            return False
    return True
