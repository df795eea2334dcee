"""Permissionless lottery scenario: producers race over netsim and build fork trees.

PoW producers hash for real (``hashrate`` attempts per tick) on their
fork-choice tip, with difficulty retargeted along each chain. PoS producers
draw the slot leader from a shared seeded beacon weighted by stake, so a
partition lets each side extend its own branch. Blocks whose parent is
unknown are held back and the parent is fetched from the sender.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..crypto import H
from ..lottery import (
    RELATIVE_VALUE,
    ChainBlock,
    ForkTree,
    PowParams,
    StakeLedger,
    pow_attempt,
    pow_hash,
    retarget_difficulty,
    select_validator_pos,
)
from ..netsim import Network, Send, Timer
from .config import ScenarioConfig
from .runner import RunResult

GENESIS = ChainBlock(H(b"lottery/genesis"), None, 0, 1, "", 0, None)


@dataclass(frozen=True)
class NewBlock:
    block: ChainBlock

    def describe(self) -> str:
        return f"block {self.block.block_hash.hex()[:12]} h={self.block.height}"


@dataclass(frozen=True)
class GetBlock:
    block_hash: bytes

    def describe(self) -> str:
        return f"get {self.block_hash.hex()[:12]}"


class Producer:
    def __init__(self, node_id: str, peers, cfg: ScenarioConfig, params: PowParams, stake: StakeLedger | None, trace):
        self.node_id = node_id
        self.peers = [p for p in peers if p != node_id]
        self.cfg = cfg
        self.params = params
        self.stake = stake
        self.trace = trace
        self.tree = ForkTree(GENESIS)
        self.orphans: dict[bytes, list[ChainBlock]] = {}
        self._work_tip: bytes | None = None
        self._nonce = 0

    def start(self):
        return [Timer(1, "tick")]

    def on_recover(self, now):
        return [Timer(1, "tick")]

    # -- production ---------------------------------------------------------

    def _difficulty_after(self, parent: ChainBlock) -> int:
        d = parent.payload if parent.payload is not None else self.params.difficulty
        w = self.params.retarget_window
        if parent.height > 0 and parent.height % w == 0:
            ts = [b.timestamp for b in self.tree.chain(parent.block_hash)][: w + 1][::-1]
            if len(ts) == w + 1:
                d = retarget_difficulty(self.params, ts, d)
        return d

    def _publish(self, block: ChainBlock):
        self.tree.add(block)
        self.trace(self.node_id, "produce", f"{block.block_hash.hex()} {block.parent.hex()} {block.height}")
        return [Send(p, NewBlock(block)) for p in self.peers]

    def _mine(self, now: int):
        tip = self.tree.main_tip
        if tip != self._work_tip:
            self._work_tip, self._nonce = tip, 0
        parent = self.tree.block(tip)
        d = self._difficulty_after(parent)
        header = tip + self.node_id.encode() + (parent.height + 1).to_bytes(8, "big")
        for _ in range(self.cfg.consensus.hashrate):
            nonce = self._nonce
            self._nonce += 1
            if pow_attempt(header, nonce, d):
                h = pow_hash(header, nonce)
                block = ChainBlock(h, tip, parent.height + 1, 2**d, self.node_id, now, d)
                self._work_tip = None
                return self._publish(block)
        return []

    def _forge(self, now: int):
        slot_ticks = self.cfg.consensus.slot_ticks
        if now % slot_ticks:
            return []
        slot = now // slot_ticks
        beacon = random.Random(f"{self.cfg.seed}/slot/{slot}")
        if select_validator_pos(self.stake, RELATIVE_VALUE, beacon) != self.node_id:
            return []
        tip = self.tree.main_tip
        parent = self.tree.block(tip)
        h = H(tip + self.node_id.encode() + slot.to_bytes(8, "big"))
        return self._publish(ChainBlock(h, tip, parent.height + 1, 1, self.node_id, now, slot))

    def on_timer(self, now, payload):
        out = self._mine(now) if self.cfg.consensus.backend == "pow" else self._forge(now)
        return out + [Timer(1, "tick")]

    # -- intake -------------------------------------------------------------

    def _adopt(self, block: ChainBlock) -> None:
        pending = [block]
        while pending:
            b = pending.pop()
            if self.tree.add(b):
                self.trace(self.node_id, "adopt", f"{b.block_hash.hex()[:16]} {b.height}")
            pending.extend(self.orphans.pop(b.block_hash, []))

    def on_message(self, now, src, msg):
        if isinstance(msg, GetBlock):
            if msg.block_hash in self.tree:
                return [Send(src, NewBlock(self.tree.block(msg.block_hash)))]
            return []
        if not isinstance(msg, NewBlock):
            return []
        b = msg.block
        if b.block_hash in self.tree:
            return []
        if b.parent in self.tree:
            self._adopt(b)
            return []
        waiting = self.orphans.setdefault(b.parent, [])
        if all(x.block_hash != b.block_hash for x in waiting):
            waiting.append(b)
        return [Send(src, GetBlock(b.parent))]


def run_lottery(cfg: ScenarioConfig) -> RunResult:
    c = cfg.consensus
    params = PowParams(c.difficulty, c.target_interval, c.retarget_window, clamp=4.0, max_difficulty=32)
    ids = [f"producer{i}" for i in range(c.producers)]
    stake = None
    if c.backend == "pos":
        rng = random.Random(f"{cfg.seed}/stake")
        stake = StakeLedger()
        for p in ids:
            stake.lock(p, rng.randint(50, 150), 10)
    net = Network(cfg.seed, latency=cfg.network.latency, jitter=cfg.network.jitter, msg_cap=cfg.network.msg_cap)
    producers = [Producer(p, ids, cfg, params, stake, net.trace) for p in ids]
    for p in producers:
        net.add_node(p)
    for spec in cfg.faults:
        net.schedule_fault(spec)
    net.start()
    net.run(cfg.duration)

    union = ForkTree(GENESIS)
    produced = {}
    for line in net.log:
        tick, node, kind, detail = line.split(",", 3)
        if kind == "produce":
            h, parent, height = detail.split(" ")
            produced[bytes.fromhex(h)] = (bytes.fromhex(parent), int(height), node, int(tick))
    weights = {}
    for p in producers:
        for h, n in p.tree.nodes.items():
            weights[h] = n.block.weight
    for h, (parent, height, node, tick) in sorted(produced.items(), key=lambda kv: kv[1][1]):
        union.add(ChainBlock(h, parent, height, weights[h], node, tick))
    main = union.main_chain()
    rows = [["", "", 0, "", 0, 1]] + [
        [h.hex(), parent.hex(), height, node, tick, int(h in main)]
        for h, (parent, height, node, tick) in sorted(produced.items(), key=lambda kv: (kv[1][3], kv[0]))
    ]
    rows[0][0] = GENESIS.block_hash.hex()
    alive = [p for p in producers if p.node_id not in net.crashed]
    checks = {
        "trees-within-union": all(set(p.tree.nodes) <= set(union.nodes) for p in producers),
        "main-chain-linked": all(union.height(h) == len(list(union.chain(h))) - 1 for h in main),
    }
    info = {
        "main_height": union.height(union.main_tip),
        "blocks_produced": len(produced),
        "discarded": len(union.discarded()),
        "tips_agree": len({p.tree.main_tip for p in alive}) == 1,
    }
    return RunResult(cfg, None, None, list(net.log), net.digest(), checks, info, forktree=rows)
