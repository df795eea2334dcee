"""Scenario execution for the execute-order-validate and order-execute pipelines."""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from ..chaincode import (
    BudgetExhausted,
    ChaincodeRegistry,
    SimulationError,
    StepBudget,
    make_proposal,
    simulate_proposal,
)
from ..contracts import KVChaincode, LoopChaincode, TokenChaincode
from ..ledger import (
    VALID,
    BlockStore,
    ChainIntegrityError,
    derive_tx_id,
    invalid,
    new_envelope,
    verify_chain,
)
from ..local import make_channel
from ..netsim import Network
from ..ordering import SoloOrderer, make_orderers
from ..policy import as_policy
from ..state import StateStore, Version
from ..validation import EXECUTION_FAILED, replay_ledger
from .config import ScenarioConfig
from .nodes import ClientNode, OrdererHost, PeerNode
from .workload import Workload

#: Chaincodes a scenario may register by name.
CATALOGUE = {
    "kv": lambda: KVChaincode("kv"),
    "token": lambda: TokenChaincode("token", "erc20"),
    "loop": lambda: LoopChaincode("loop"),
}


class Tracer:
    """Line-oriented ``tick,node,kind,detail`` trace with a running digest."""

    def __init__(self) -> None:
        self.now = 0
        self.lines: list[str] = []
        self._digest = hashlib.sha256()

    def trace(self, node: str, kind: str, detail: str) -> None:
        line = f"{self.now},{node},{kind},{detail}"
        self._digest.update(line.encode() + b"\n")
        self.lines.append(line)

    def digest(self) -> str:
        return self._digest.hexdigest()


@dataclass
class RunResult:
    config: ScenarioConfig
    store: BlockStore | None  # reference peer's ledger; None for lottery runs
    state: StateStore | None
    trace: list[str]
    trace_digest: str
    checks: dict[str, bool] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)
    forktree: list | None = None  # lottery runs: hash,parent,height,producer,tick,main rows

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def height(self) -> int:
        return self.store.height if self.store is not None else -1

    def state_hash(self, include_versions: bool = True) -> str:
        return self.state.state_hash(include_versions).hex() if self.state is not None else ""


def chaincode_registry(cfg: ScenarioConfig) -> ChaincodeRegistry:
    return ChaincodeRegistry([CATALOGUE[c]() for c in cfg.chaincodes])


def channel_for(cfg: ScenarioConfig):
    policies = {"*": cfg.channel.endorsement_policy} if cfg.channel.endorsement_policy else None
    return make_channel(
        orgs=cfg.channel.orgs,
        peers_per_org=cfg.channel.peers_per_org,
        clients=cfg.channel.clients,
        backend=cfg.consensus.backend,
        orderers=cfg.orderer_ids,
        f_tolerated=cfg.consensus.f_tolerated,
        batch_max_txs=cfg.channel.batch_max_txs,
        batch_timeout=cfg.channel.batch_timeout,
        endorsement_policies=policies,
    )


def prefixes_agree(stores) -> bool:
    """Block hashes agree at every sequence number all ``stores`` hold."""
    common = min(len(s) for s in stores)
    return all(len({s.hash_at(i) for s in stores}) == 1 for i in range(common))


def _chain_ok(store: BlockStore) -> bool:
    try:
        verify_chain(store)
    except ChainIntegrityError:
        return False
    return True


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Run one scenario to ``cfg.duration`` and check the ledger invariants."""
    if cfg.pipeline == "order-execute":
        return run_order_execute_mode(cfg)
    if cfg.pipeline == "lottery":
        from .lottery_run import run_lottery

        return run_lottery(cfg)
    return run_execute_order_validate(cfg)


# -- execute-order-validate -----------------------------------------------------


def run_execute_order_validate(cfg: ScenarioConfig) -> RunResult:
    setup = channel_for(cfg)
    chaincodes = chaincode_registry(cfg)
    budget = StepBudget(cfg.step_budget or 100_000)
    net = Network(cfg.seed, latency=cfg.network.latency, jitter=cfg.network.jitter, msg_cap=cfg.network.msg_cap)
    peer_ids = list(cfg.peer_ids)
    # One anchor peer per org receives blocks from the orderers; gossip does the rest.
    anchors = [f"peer0.{org}" for org in cfg.channel.orgs]
    orderers = [OrdererHost(o) for o in make_orderers(setup.genesis, subscribers=anchors)]
    peers = [
        PeerNode(
            pid,
            setup.signer(pid),
            setup.genesis,
            chaincodes,
            budget,
            peer_ids,
            cfg.orderer_ids,
            cfg.network.gossip_fanout,
            net.node_rng(pid),
            net.trace,
        )
        for pid in peer_ids
    ]
    registry = setup.config.registry()
    workload = Workload(cfg)

    def policy_for(cc: str):
        return as_policy(setup.config.endorsement_policy(cc))

    clients = [
        ClientNode(c, setup.signer(c), workload, peer_ids, cfg.orderer_ids, policy_for, registry, net.trace)
        for c in cfg.channel.clients
    ]
    for node in [*orderers, *peers, *clients]:
        net.add_node(node)
    for spec in cfg.faults:
        net.schedule_fault(spec)
    net.start()
    net.run(cfg.duration)

    # Reference ledger: the tallest peer, lowest id on ties.
    ref = min(peers, key=lambda p: (-p.ledger.height, p.node_id))
    checks = {
        "chain-integrity": all(_chain_ok(p.ledger.store) for p in peers),
        "peer-agreement": prefixes_agree([p.ledger.store for p in peers] + [o.inner.ledger for o in orderers]),
        "replay-matches-state": replay_ledger(ref.ledger.store).state_hash() == ref.ledger.state.state_hash(),
        "no-halted-peer": not any(p.halted for p in peers),
    }
    by_height: dict[int, set[bytes]] = {}
    for p in peers:
        by_height.setdefault(p.ledger.height, set()).add(p.ledger.state.state_hash())
    checks["state-agreement"] = all(len(h) == 1 for h in by_height.values())
    info = {
        "peer_heights": {p.node_id: p.ledger.height for p in peers},
        "orderer_heights": {o.node_id: o.inner.ledger.height for o in orderers},
        "reference_peer": ref.node_id,
        "messages_delivered": net.delivered,
        "messages_dropped": net.dropped,
    }
    return RunResult(cfg, ref.ledger.store, ref.ledger.state, list(net.log), net.digest(), checks, info)


# -- order-execute ---------------------------------------------------------------


@dataclass
class _Execution:
    cost: float  # steps; math.inf when the transaction never finishes
    write_set: Any
    failed: bool
    paid: int = 0


def run_order_execute_mode(cfg: ScenarioConfig) -> RunResult:
    """Order first, then execute every transaction sequentially.

    The executor spends ``steps_per_tick`` chaincode steps per tick. With a
    step budget a transaction that exhausts it is flagged failed after
    consuming the whole budget. Without one, a transaction that has not
    finished when the run ends would never finish: its block, and every
    block after it, is never committed.
    """
    setup = channel_for(cfg)
    chaincodes = chaincode_registry(cfg)
    orderer = SoloOrderer(cfg.orderer_ids[0], setup.genesis)
    workload = Workload(cfg)
    tracer = Tracer()
    store = BlockStore()
    store.append_block(setup.genesis, [])
    state = StateStore()
    nonces = {c: 0 for c in cfg.channel.clients}
    blocks: deque = deque()
    current = None  # (block, flags, index, execution)
    credit = 0
    loop_block = None

    def execute(tx, tick: int) -> _Execution:
        proposal = make_proposal(tx.client, tx.chaincode_id, tx.operation, tx.args, tx.nonce)
        if cfg.step_budget is not None:
            limit = cfg.step_budget
        else:
            # Everything the executor can still spend before the run ends.
            limit = credit + cfg.steps_per_tick * (cfg.duration - tick) + 1
        try:
            sim = simulate_proposal(state, proposal, StepBudget(limit), chaincodes)
        except BudgetExhausted:
            if cfg.step_budget is None:
                return _Execution(math.inf, None, True)
            return _Execution(limit, None, True)
        except SimulationError:
            return _Execution(1, None, True)
        return _Execution(sim.steps_used, sim.write_set, False)

    for tick in range(cfg.duration + 1):
        tracer.now = tick
        for client in cfg.channel.clients:
            for spec in workload.requests(client, tick):
                env = new_envelope(setup.signer(client), spec.chaincode, spec.operation, spec.args, nonces[client])
                nonces[client] += 1
                orderer.broadcast(env, tick)
                tracer.trace(client, "submit", f"{env.tx_id.hex()[:16]} {spec.describe()}")
        for block in orderer.tick(tick):
            blocks.append(block)
            tracer.trace(orderer.node_id, "cut", f"{block.seq} n={len(block.txs)}")
        credit += cfg.steps_per_tick
        while True:
            if current is None:
                if not blocks:
                    break
                block = blocks.popleft()
                current = [block, [], 0, None]
            block, flags, i, ex = current
            if i == len(block.txs):
                store.append_block(block, flags)
                valid = sum(1 for f in flags if f.flag == "valid")
                tracer.trace("executor", "commit", f"{block.seq} {block.block_hash.hex()[:16]} valid={valid} invalid={len(flags) - valid}")
                current = None
                continue
            tx = block.txs[i]
            if ex is None:
                ex = current[3] = execute(tx, tick)
                if tx.chaincode_id == "loop" and loop_block is None:
                    loop_block = block.seq
            need = ex.cost - ex.paid
            if need > credit:
                ex.paid += credit
                credit = 0
                break
            credit -= int(need)
            if ex.failed:
                flags.append(invalid(EXECUTION_FAILED))
            else:
                state.apply_writeset(ex.write_set, Version(block.seq, i), tx.tx_id)
                flags.append(VALID)
            current[2], current[3] = i + 1, None
        if current is None and not blocks:
            credit = 0  # an idle executor does not bank steps
    checks = {
        "chain-integrity": _chain_ok(store),
        "tx-ids-derived": all(tx.tx_id == derive_tx_id(tx.client, tx.nonce) for _, _, tx, _ in store.transactions()),
    }
    info = {
        "loop_block": loop_block,
        "ordered_height": orderer.ledger.height,
        "executed_height": store.height,
        "backlog_blocks": len(blocks) + (current is not None),
    }
    return RunResult(cfg, store, state, tracer.lines, tracer.digest(), checks, info)


def replay_order_execute(store: BlockStore, chaincode_ids) -> StateStore:
    """Re-execute every transaction flagged valid, in ledger order."""
    chaincodes = ChaincodeRegistry([CATALOGUE[c]() for c in chaincode_ids])
    state = StateStore()
    for seq, i, tx, validity in store.transactions():
        if validity.flag != "valid":
            continue
        proposal = make_proposal(tx.client, tx.chaincode_id, tx.operation, tx.args, tx.nonce)
        sim = simulate_proposal(state, proposal, StepBudget(10**9), chaincodes)
        state.apply_writeset(sim.write_set, Version(seq, i), tx.tx_id)
    return state
