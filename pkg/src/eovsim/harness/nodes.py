"""Netsim node roles for the execute-order-validate pipeline."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from ..chaincode import ChaincodeRegistry, Proposal, SimulationError, StepBudget, make_proposal, simulate_proposal
from ..endorsement import Endorsement, EndorsementCollector, ProposalResponse, endorse
from ..ledger import Block, IdentityRegistry, Signer, make_signer, new_envelope
from ..netsim import FaultSpec, GossipPeer, GossipPush, Send, Timer
from ..ordering import Broadcast, DeliverBlock
from ..policy import Policy
from ..state import ReadSet, WriteSet
from ..validation import PeerHalted, PeerLedger
from .workload import TxSpec, Workload

Trace = Callable[[str, str, str], None]

GOSSIP_TTL = 4
CATCHUP_RETRY = 10


@dataclass(frozen=True)
class ProposeMsg:
    proposal: Proposal

    def describe(self) -> str:
        return f"propose {self.proposal.tx_id.hex()[:12]}"


@dataclass(frozen=True)
class ResponseMsg:
    tx_id: bytes
    response: ProposalResponse

    def describe(self) -> str:
        return f"response {self.tx_id.hex()[:12]} {self.response.status}"


@dataclass(frozen=True)
class DeliverRequest:
    from_seq: int

    def describe(self) -> str:
        return f"deliver-request {self.from_seq}"


class PeerNode:
    """Endorses proposals against committed state and commits blocks in sequence.

    Blocks arrive from orderers (anchor peers only) or through gossip; they
    are buffered and committed strictly in order. A detected gap triggers a
    catch-up request to an orderer.
    """

    def __init__(
        self,
        node_id: str,
        signer: Signer,
        genesis: Block,
        chaincodes: ChaincodeRegistry,
        budget: StepBudget,
        neighbours: Sequence[str],
        orderers: Sequence[str],
        fanout: int,
        rng: random.Random,
        trace: Trace,
    ):
        self.node_id = node_id
        self.signer = signer
        self.ledger = PeerLedger(genesis)
        self.chaincodes = chaincodes
        self.budget = budget
        self.orderers = list(orderers)
        self.rng = rng
        self.trace = trace
        self.gossip = GossipPeer(node_id, neighbours, fanout, rng, ttl=GOSSIP_TTL, on_item=self._on_block)
        self.buffer: dict[int, Block] = {}
        self.byzantine = ""
        self.halted = False
        self._requested = 0  # next seq we already asked an orderer for

    # -- endorsement -------------------------------------------------------

    def _respond(self, now: int, proposal: Proposal) -> ProposalResponse:
        try:
            sim = simulate_proposal(self.ledger.state, proposal, self.budget, self.chaincodes, tick=now)
        except SimulationError as exc:
            sim = exc
        if self.byzantine == "wrong-signature":
            forger = make_signer(self.node_id, self.signer.org, "peer", seed=b"forged/" + self.node_id.encode())
            return endorse(forger, proposal, sim)
        response = endorse(self.signer, proposal, sim)
        if self.byzantine == "forge-writeset" and response.endorsement is not None:
            e = response.endorsement
            forged = WriteSet(e.write_set.entries + ((b"kv\x00forged", self.node_id.encode()),))
            unsigned = replace(e, write_set=forged, signature=None)
            signed = replace(unsigned, signature=self.signer.sign(unsigned.signing_bytes()))
            response = replace(response, endorsement=signed)
        return response

    # -- block intake --------------------------------------------------------

    def _on_block(self, item_id, block: Block):
        if block.seq > self.ledger.height:
            self.buffer.setdefault(block.seq, block)
        return self._drain()

    def _drain(self):
        while not self.halted and self.ledger.height + 1 in self.buffer:
            block = self.buffer.pop(self.ledger.height + 1)
            try:
                verdicts = self.ledger.commit(block)
            except PeerHalted as exc:
                self.halted = True
                self.trace(self.node_id, "halt", str(exc))
                return []
            valid = sum(1 for v in verdicts if v.valid)
            self.trace(
                self.node_id,
                "commit",
                f"{block.seq} {block.block_hash.hex()[:16]} valid={valid} invalid={len(verdicts) - valid}",
            )
        for seq in [s for s in self.buffer if s <= self.ledger.height]:
            del self.buffer[seq]
        if self.buffer:
            return self._catch_up()
        return []

    def _catch_up(self):
        nxt = self.ledger.height + 1
        if nxt <= self._requested or not self.orderers:
            return []
        self._requested = nxt
        return [Send(self.rng.choice(self.orderers), DeliverRequest(nxt)), Timer(CATCHUP_RETRY, ("catchup", nxt))]

    # -- netsim hooks ----------------------------------------------------------

    def on_message(self, now, src, msg):
        if isinstance(msg, ProposeMsg):
            return [Send(src, ResponseMsg(msg.proposal.tx_id, self._respond(now, msg.proposal)))]
        if isinstance(msg, DeliverBlock):
            b = msg.block
            return self.gossip.hold(b.seq, b)
        if isinstance(msg, GossipPush):
            return self.gossip.on_message(now, src, msg)
        return []

    def on_timer(self, now, payload):
        if isinstance(payload, tuple) and payload[0] == "catchup":
            if self.ledger.height + 1 == payload[1]:
                self._requested = 0
                return self._catch_up()
            return []
        return self.gossip.on_timer(now, payload)

    def on_crash(self, now):
        self.gossip.on_crash(now)

    def on_recover(self, now):
        self._requested = 0
        out = list(self.gossip.on_recover(now))
        nxt = self.ledger.height + 1
        self._requested = nxt
        out += [Send(self.rng.choice(self.orderers), DeliverRequest(nxt)), Timer(CATCHUP_RETRY, ("catchup", nxt))]
        return out

    def on_fault(self, now, spec: FaultSpec, inject: bool):
        if spec.kind == "byzantine-endorser":
            self.byzantine = spec.strategy if inject else ""
        return []


class ClientNode:
    """Issues workload proposals, collects endorsements, broadcasts envelopes.

    A ``dos-client`` fault makes it additionally broadcast never-terminating
    loop transactions that skip endorsement and carry only its own
    signature, so they are ordered and then flagged invalid.
    """

    def __init__(
        self,
        node_id: str,
        signer: Signer,
        workload: Workload,
        peers: Sequence[str],
        orderers: Sequence[str],
        policies: Callable[[str], Policy],
        registry: IdentityRegistry,
        trace: Trace,
        endorse_timeout: int = 10,
    ):
        self.node_id = node_id
        self.signer = signer
        self.workload = workload
        self.peers = list(peers)
        self.orderers = list(orderers)
        self.policies = policies
        self.registry = registry
        self.trace = trace
        self.endorse_timeout = endorse_timeout
        self.nonce = 0
        self.pending: dict[bytes, EndorsementCollector] = {}
        self.dos_rate = 0
        self.next_tick = 0
        self.last_tick = max(workload.last_tick, workload.w.loop_tx_at or 0)

    def _next_nonce(self) -> int:
        n = self.nonce
        self.nonce += 1
        return n

    def start(self):
        return [Timer(0, "tick")]

    def _propose(self, now: int, spec: TxSpec):
        proposal = make_proposal(self.node_id, spec.chaincode, spec.operation, spec.args, self._next_nonce())
        policy = self.policies(spec.chaincode)
        self.pending[proposal.tx_id] = EndorsementCollector(self.signer, proposal, policy, self.registry)
        self.trace(self.node_id, "propose", f"{proposal.tx_id.hex()[:16]} {spec.describe()}")
        out = [Send(p, ProposeMsg(proposal)) for p in self.peers]
        out.append(Timer(self.endorse_timeout, ("expire", proposal.tx_id)))
        return out

    def _broadcast(self, env):
        return [Send(o, Broadcast(env)) for o in self.orderers]

    def _dos_tx(self):
        nonce = self._next_nonce()
        proposal = make_proposal(self.node_id, "loop", "spin", (), nonce)
        unsigned = Endorsement(self.node_id, ReadSet(), WriteSet(), b"", "loop", proposal.tx_id)
        e = replace(unsigned, signature=self.signer.sign(unsigned.signing_bytes()))
        env = new_envelope(self.signer, "loop", "spin", (), nonce, endorsements=[e])
        self.trace(self.node_id, "dos", env.tx_id.hex()[:16])
        return self._broadcast(env)

    def on_timer(self, now, payload):
        if payload == "tick":
            # Catch up on ticks missed while crashed; requests are per tick.
            out = []
            while self.next_tick <= now:
                if self.next_tick == now:
                    for spec in self.workload.requests(self.node_id, now):
                        out += self._propose(now, spec)
                else:
                    self.workload.requests(self.node_id, self.next_tick)
                self.next_tick += 1
            if now < self.last_tick:
                out.append(Timer(1, "tick"))
            return out
        if payload == "dos":
            if not self.dos_rate:
                return []
            out = []
            for _ in range(self.dos_rate):
                out += self._dos_tx()
            return out + [Timer(1, "dos")]
        if isinstance(payload, tuple) and payload[0] == "expire":
            collector = self.pending.pop(payload[1], None)
            if collector is not None and collector.envelope is None:
                failure = collector.failure(timed_out=True)
                self.trace(self.node_id, "endorse-fail", f"{payload[1].hex()[:16]} {failure.reason}")
        return []

    def on_message(self, now, src, msg):
        if not isinstance(msg, ResponseMsg):
            return []
        collector = self.pending.get(msg.tx_id)
        if collector is None:
            return []
        env = collector.add(msg.response)
        if env is None:
            if len(collector.failures) + collector.rejected_signatures + sum(map(len, collector.groups.values())) == len(self.peers):
                del self.pending[msg.tx_id]
                self.trace(self.node_id, "endorse-fail", f"{msg.tx_id.hex()[:16]} {collector.failure().reason}")
            return []
        del self.pending[msg.tx_id]
        self.trace(self.node_id, "endorsed", f"{env.tx_id.hex()[:16]} n={len(env.endorsements)}")
        return self._broadcast(env)

    def on_fault(self, now, spec: FaultSpec, inject: bool):
        if spec.kind != "dos-client":
            return []
        started = self.dos_rate > 0
        self.dos_rate = spec.rate if inject else 0
        return [Timer(0, "dos")] if inject and not started else []

    def on_crash(self, now):
        self.pending.clear()

    def on_recover(self, now):
        return [Timer(0, "tick")] if self.next_tick <= self.last_tick else []


class OrdererHost:
    """Adds the peer catch-up request on top of an ordering node."""

    def __init__(self, inner):
        self.inner = inner
        self.node_id = inner.node_id

    def start(self):
        return self.inner.start()

    def on_message(self, now, src, msg):
        if isinstance(msg, DeliverRequest):
            out = []
            s = msg.from_seq
            while (block := self.inner.deliver(s)) is not None:
                out.append(Send(src, DeliverBlock(block)))
                s += 1
            return out
        return self.inner.on_message(now, src, msg)

    def on_timer(self, now, payload):
        return self.inner.on_timer(now, payload)

    def on_crash(self, now):
        if hasattr(self.inner, "on_crash"):
            self.inner.on_crash(now)

    def on_recover(self, now):
        return self.inner.on_recover(now)
