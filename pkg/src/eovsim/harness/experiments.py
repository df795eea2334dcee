"""Seeded experiments over the ordering service and the two pipelines."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..ledger import ChainIntegrityError, make_signer, new_envelope, verify_chain
from ..local import make_channel
from ..netsim import FaultSpec, Network, Send, Timer
from ..ordering import Broadcast, CFTOrderer, DeliverBlock, OrderingConfig
from .config import ScenarioConfig, load_scenario
from .metrics import commit_ticks
from .runner import RunResult, prefixes_agree, run_scenario

# -- ordering safety -----------------------------------------------------------------


class Broadcaster:
    """Client that broadcasts pre-built envelopes at fixed ticks and records deliveries."""

    def __init__(self, node_id: str, schedule: dict[int, list], orderers: Sequence[str], rng: random.Random):
        self.node_id = node_id
        self.schedule = schedule
        self.orderers = list(orderers)
        self.rng = rng
        self.sent: set[bytes] = set()
        self.deliveries: dict[str, list] = {o: [] for o in orderers}

    def start(self):
        return [Timer(t, t) for t in sorted(self.schedule)]

    def on_timer(self, now, payload):
        out = []
        for tx in self.schedule.get(payload, ()):
            self.sent.add(tx.tx_id)
            # Each envelope goes to one random orderer, sometimes two.
            targets = self.rng.sample(self.orderers, 2 if self.rng.random() < 0.25 else 1)
            out += [Send(o, Broadcast(tx)) for o in targets]
        return out

    def on_message(self, now, src, msg):
        if isinstance(msg, DeliverBlock):
            self.deliveries[src].append(msg.block)
        return []


@dataclass
class SafetyReport:
    seed: int
    faults: tuple[FaultSpec, ...]
    agreement: bool
    hash_chain: bool
    no_skipping: bool
    no_creation: bool
    validity: bool | None  # None when some fault never heals
    heights: dict[str, int]
    accepted: int
    delivered: int

    @property
    def violations(self) -> list[str]:
        out = [
            name
            for name in ("agreement", "hash_chain", "no_skipping", "no_creation")
            if not getattr(self, name)
        ]
        if self.validity is False:
            out.append("validity")
        return out


def random_faults(rng: random.Random, nodes: Sequence[str], start: int, end: int, permanent_p: float = 0.15) -> tuple[FaultSpec, ...]:
    """One to three non-overlapping fault episodes, each touching a single orderer.

    At most one node is crashed or cut off at any time, which keeps a
    3-node, f=1 cluster within tolerance.
    """
    faults = []
    t = start + rng.randrange(10)
    for k in range(rng.randint(1, 3)):
        if t >= end - 5:
            break
        length = rng.randint(5, 40)
        until = min(t + length, end)
        target = rng.choice(nodes)
        if rng.random() < 0.5:
            faults.append(FaultSpec("crash", target, t, until))
        else:
            rest = tuple(n for n in nodes if n != target)
            faults.append(FaultSpec("partition", "", t, until, groups=((target,), rest)))
        t = until + rng.randint(1, 15)
    if faults and faults[-1].kind == "crash" and rng.random() < permanent_p:
        faults[-1] = replace(faults[-1], until_tick=None)
    return tuple(faults)


def ordering_safety_run(
    seed: int,
    n_orderers: int = 3,
    f: int = 1,
    duration: int = 200,
    n_txs: int = 40,
    heal_by: int = 140,
    faults: Sequence[FaultSpec] | None = None,
    jitter: int = 1,
) -> SafetyReport:
    rng = random.Random(seed)
    orderers = tuple(f"orderer{i}" for i in range(n_orderers))
    setup = make_channel(backend="cft-replicated", orderers=orderers, f_tolerated=f, batch_max_txs=4, batch_timeout=2)
    config = OrderingConfig.from_channel(setup.config)
    net = Network(seed, latency=1, jitter=jitter, keep_log=False)
    nodes = [CFTOrderer(o, setup.genesis, config, subscribers=("client",)) for o in orderers]
    signer = setup.signer("alice")
    schedule: dict[int, list] = {}
    for n in range(n_txs):
        tick = rng.randrange(1, heal_by)
        schedule.setdefault(tick, []).append(new_envelope(signer, "kv", "put", (b"k%d" % n, b"v"), n))
    rogue = make_signer("mallory", "outsider", "client")
    for n in range(3):
        # Unknown identity: must be rejected and never delivered.
        schedule.setdefault(rng.randrange(1, heal_by), []).append(new_envelope(rogue, "kv", "put", (b"x", b"y"), n))
    client = Broadcaster("client", schedule, orderers, net.node_rng("client"))
    for node in [*nodes, client]:
        net.add_node(node)
    if faults is None:
        faults = random_faults(rng, orderers, 10, heal_by)
    for spec in faults:
        net.schedule_fault(spec)
    net.start()
    net.run(duration)

    stores = [n.ledger for n in nodes]
    agreement = prefixes_agree(stores)
    for src, blocks in client.deliveries.items():
        for b in blocks:
            mine = nodes[orderers.index(src)].ledger
            agreement = agreement and b.seq < len(mine) and mine.hash_at(b.seq) == b.block_hash
    hash_chain = True
    for s in stores:
        try:
            verify_chain(s)
        except ChainIntegrityError:
            hash_chain = False
    no_skipping = all([b.seq for b in s.blocks()] == list(range(len(s))) for s in stores)
    # Links are not FIFO, so arrival order says nothing; the delivered set must have no holes.
    no_skipping = no_skipping and all(
        sorted(b.seq for b in blocks) == list(range(1, len(blocks) + 1)) for blocks in client.deliveries.values()
    )
    no_creation = True
    for s in stores:
        ids = [tx.tx_id for b in s.blocks()[1:] for tx in b.txs]
        if len(ids) != len(set(ids)) or not set(ids) <= client.sent:
            no_creation = False
        if any(tx.client == "mallory" for b in s.blocks() for tx in b.txs):
            no_creation = False
    accepted = set().union(*(n.stats.accepted for n in nodes))
    healed = all(spec.until_tick is not None and spec.until_tick <= heal_by for spec in faults)
    validity = None
    if healed:
        validity = all(accepted <= {tx.tx_id for b in s.blocks() for tx in b.txs} for s in stores)
    delivered = len({tx.tx_id for b in stores[0].blocks() for tx in b.txs})
    return SafetyReport(
        seed, tuple(faults), agreement, hash_chain, no_skipping, no_creation, validity,
        {n.node_id: n.ledger.height for n in nodes}, len(accepted), delivered,
    )


def ordering_safety_suite(seeds: Sequence[int], **kwargs) -> list[SafetyReport]:
    return [ordering_safety_run(s, **kwargs) for s in seeds]


# -- throughput ceiling ------------------------------------------------------------------


class Flooder:
    """Broadcasts ``rate`` fresh envelopes per tick to one orderer."""

    def __init__(self, node_id: str, target: str, rate: int, until: int, signer):
        self.node_id = node_id
        self.target = target
        self.rate = rate
        self.until = until
        self.signer = signer
        self.nonce = 0

    def start(self):
        return [Timer(1, "tick")]

    def on_timer(self, now, payload):
        out = []
        for _ in range(self.rate):
            env = new_envelope(self.signer, "kv", "put", (b"k%d" % self.nonce, b"v"), self.nonce)
            self.nonce += 1
            out.append(Send(self.target, Broadcast(env)))
        return out + ([Timer(1, "tick")] if now < self.until else [])

    def on_message(self, now, src, msg):
        return []


def ordering_throughput(n_orderers: int, seed: int = 0, msg_cap: int = 3, rate: int = 30, duration: int = 300, warmup: int = 50) -> float:
    """Committed tx per tick at the leader once the cluster is saturated."""
    orderers = tuple(f"orderer{i}" for i in range(n_orderers))
    f = (n_orderers - 1) // 2
    setup = make_channel(backend="cft-replicated", orderers=orderers, f_tolerated=f, batch_max_txs=10, batch_timeout=2)
    config = OrderingConfig.from_channel(setup.config)
    net = Network(seed, latency=1, msg_cap=msg_cap, keep_log=False)
    nodes = [CFTOrderer(o, setup.genesis, config) for o in orderers]
    for node in nodes:
        net.add_node(node)
    # orderer0 wins the first election, so the flood goes straight to the leader.
    net.add_node(Flooder("client", "orderer0", rate, duration, setup.signer("alice")))
    net.start()
    net.run(warmup)
    before = sum(len(b.txs) for b in nodes[0].ledger.blocks())
    net.run(duration)
    after = sum(len(b.txs) for b in nodes[0].ledger.blocks())
    return (after - before) / (duration - warmup)


# -- pipeline experiments ------------------------------------------------------------------


@dataclass
class DoubleSpendOutcome:
    seed: int
    flags: list[str]  # verdicts of the two racing moves, in ledger order
    in_ledger: int

    @property
    def ok(self) -> bool:
        return self.in_ledger == 2 and sorted(self.flags) == ["invalid:mvcc-conflict", "valid"]


def double_spend_trial(seed: int) -> DoubleSpendOutcome:
    result = run_scenario(load_scenario("double-spend", [f"seed={seed}"]))
    flags = []
    for _, _, tx, validity in result.store.transactions():
        if tx.operation == "move":
            flags.append(validity.flag + (f":{validity.reason}" if validity.reason else ""))
    return DoubleSpendOutcome(seed, flags, len(flags))


@dataclass
class DosContrast:
    loop_tick: int
    heights: dict[str, list[tuple[int, int]]] = field(default_factory=dict)  # run -> (tick, height) commits
    loop_blocks: dict[str, int | None] = field(default_factory=dict)

    def height_at(self, run: str, tick: int) -> int:
        h = 0
        for t, seq in self.heights[run]:
            if t <= tick:
                h = max(h, seq)
        return h

    def final_height(self, run: str) -> int:
        return max((seq for _, seq in self.heights[run]), default=0)

    def progressed(self, run: str) -> bool:
        """Blocks kept being committed after the loop transaction was submitted."""
        return self.final_height(run) > self.height_at(run, self.loop_tick)

    def frozen(self, run: str) -> bool:
        lb = self.loop_blocks.get(run)
        return lb is not None and self.final_height(run) == lb - 1


DOS_RUNS = {
    "execute-order-validate": "dos-execute-order-validate",
    "order-execute": "dos-order-execute",
    "order-execute-budgeted": "dos-order-execute-budgeted",
}


def dos_contrast(seed: int = 1) -> DosContrast:
    out = None
    for run, preset in DOS_RUNS.items():
        cfg = load_scenario(preset, [f"seed={seed}"])
        result = run_scenario(cfg)
        if out is None:
            out = DosContrast(cfg.workload.loop_tx_at)
        node = "executor" if cfg.pipeline == "order-execute" else result.info["reference_peer"]
        out.heights[run] = sorted((t, s) for s, t in commit_ticks(result.trace, node).items())
        out.loop_blocks[run] = result.info.get("loop_block")
    return out


def cross_pipeline_states(seed: int, duration: int = 80, until: int = 50) -> tuple[str, str]:
    """Final state hashes (versions excluded) of one conflict-free workload on both pipelines."""
    tree = {
        "seed": seed,
        "duration": duration,
        "chaincodes": ["kv"],
        "workload": {"chaincode": "kv", "mix": {"put": 1}, "rate": 2, "until": until},
    }
    eov = run_scenario(load_scenario(tree))
    oe = run_scenario(load_scenario({**tree, "pipeline": "order-execute"}))
    return eov.state_hash(False), oe.state_hash(False)


def scenario_digests(cfg: ScenarioConfig) -> tuple[str, str, int]:
    r: RunResult = run_scenario(cfg)
    return r.trace_digest, r.state_hash(), r.height
