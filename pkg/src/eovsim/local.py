"""Synchronous in-process channel: endorse, order with a solo orderer, validate.

No network is involved; every call runs the full pipeline to completion.
Used by the contract scenarios, the double-spend experiment, and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .chaincode import (
    Chaincode,
    ChaincodeRegistry,
    Proposal,
    SimulationError,
    StepBudget,
    make_proposal,
    simulate_proposal,
)
from .endorsement import EndorsementFailure, ProposalResponse, collect_endorsements, endorse
from .ledger import (
    Block,
    ChannelConfig,
    Signer,
    TransactionEnvelope,
    build_genesis,
    make_signer,
)
from .ordering.solo import SoloOrderer
from .validation import PeerLedger, ValidationVerdict


@dataclass
class ChannelSetup:
    config: ChannelConfig
    genesis: Block
    signers: dict[str, Signer]
    peers: list[str]
    clients: list[str]

    def signer(self, identity_id: str) -> Signer:
        return self.signers[identity_id]


def make_channel(
    orgs: Sequence[str] = ("org1", "org2", "org3"),
    peers_per_org: int = 1,
    clients: Sequence[str] = ("alice", "bob"),
    backend: str = "solo",
    orderers: Sequence[str] = ("orderer0",),
    f_tolerated: int = 0,
    batch_max_txs: int = 10,
    batch_timeout: int = 2,
    endorsement_policies: Mapping[str, str] | None = None,
    invoke_grants: Mapping[str, Sequence[str]] | None = None,
    access_rules: Mapping[str, str] | None = None,
    extra_identities: Iterable[tuple[str, str, str]] = (),
    channel_id: str = "ch1",
) -> ChannelSetup:
    """Build a channel with one admin and ``peers_per_org`` peers per org.

    Peers are named ``peer<i>.<org>``; clients join the first org. The
    default endorsement policy for every chaincode is a majority of orgs.
    """
    signers: dict[str, Signer] = {}
    peers: list[str] = []
    for org in orgs:
        admin = make_signer(f"admin.{org}", org, "admin")
        signers[admin.id] = admin
        for i in range(peers_per_org):
            p = make_signer(f"peer{i}.{org}", org, "peer")
            signers[p.id] = p
            peers.append(p.id)
    for c in clients:
        signers[c] = make_signer(c, orgs[0], "client")
    for ident, org, role in extra_identities:
        signers[ident] = make_signer(ident, org, role)
    for o in orderers:
        signers[o] = make_signer(o, "ordererorg", "orderer")
    majority = len(orgs) // 2 + 1
    org_list = ", ".join(orgs)
    admins = ", ".join(f"{o}.admin" for o in orgs)
    default_policy = f"KOF({majority}, {org_list})"
    policies = dict(endorsement_policies or {})
    policies.setdefault("*", default_policy)
    config = ChannelConfig(
        channel_id=channel_id,
        identities=tuple(s.identity for s in signers.values()),
        orderers=tuple(orderers),
        consensus={
            "backend": backend,
            "f_tolerated": f_tolerated,
            "batch_max_txs": batch_max_txs,
            "batch_timeout": batch_timeout,
        },
        access_rules=dict(access_rules or {"broadcast": f"OR({org_list})", "deliver": f"OR({org_list})"}),
        modification_rules={"*": f"KOF({majority}, {admins})"},
        endorsement_policies=policies,
        invoke_grants={k: tuple(v) for k, v in (invoke_grants or {}).items()},
    )
    return ChannelSetup(config, build_genesis(config), signers, peers, list(clients))


@dataclass
class InvokeResult:
    tx_id: bytes
    response: bytes
    verdict: ValidationVerdict | None
    events: tuple = ()

    @property
    def valid(self) -> bool:
        return self.verdict is not None and self.verdict.valid


@dataclass
class LocalChannel:
    setup: ChannelSetup
    chaincodes: Sequence[Chaincode]
    budget: StepBudget = field(default_factory=StepBudget)
    tick: int = 0

    def __post_init__(self):
        cfg = self.setup.config
        self.registry = ChaincodeRegistry(self.chaincodes, cfg.invoke_grants)
        self.peers = {p: PeerLedger(self.setup.genesis) for p in self.setup.peers}
        self.orderer = SoloOrderer("orderer", self.setup.genesis)
        self.nonces: dict[str, int] = {}
        self.events: dict[bytes, tuple] = {}
        self.verdicts: dict[bytes, ValidationVerdict] = {}

    # -- helpers -----------------------------------------------------------

    @property
    def reference(self) -> PeerLedger:
        return self.peers[self.setup.peers[0]]

    def next_nonce(self, client: str) -> int:
        n = self.nonces.get(client, 0)
        self.nonces[client] = n + 1
        return n

    def proposal(self, client: str, chaincode_id: str, operation: str, args: Sequence[Any] = ()) -> Proposal:
        return make_proposal(client, chaincode_id, operation, args, self.next_nonce(client))

    def simulate(self, peer: str, proposal: Proposal):
        try:
            return simulate_proposal(self.peers[peer].state, proposal, self.budget, self.registry, tick=self.tick)
        except SimulationError as exc:
            return exc

    def endorse_at(self, peer: str, proposal: Proposal) -> ProposalResponse:
        result = self.simulate(peer, proposal)
        if not isinstance(result, SimulationError):
            self.events.setdefault(proposal.tx_id, result.events)
        return endorse(self.setup.signer(peer), proposal, result)

    def query(self, client: str, chaincode_id: str, operation: str, args: Sequence[Any] = ()) -> bytes:
        """Simulate on the reference peer without ordering anything."""
        p = make_proposal(client, chaincode_id, operation, args, -1)
        result = self.simulate(self.setup.peers[0], p)
        if isinstance(result, SimulationError):
            raise result
        return result.response

    # -- pipeline ----------------------------------------------------------

    def propose(
        self,
        client: str,
        chaincode_id: str,
        operation: str,
        args: Sequence[Any] = (),
        endorsers: Sequence[str] | None = None,
    ) -> TransactionEnvelope:
        """Collect endorsements; raises :class:`EndorsementFailure`."""
        proposal = self.proposal(client, chaincode_id, operation, args)
        targets = list(endorsers) if endorsers is not None else self.setup.peers
        responses = [self.endorse_at(p, proposal) for p in targets]
        policy = self.setup.config.endorsement_policy(chaincode_id)
        return collect_endorsements(self.setup.signer(client), proposal, responses, policy, self.reference.registry)

    def submit(self, envelope: TransactionEnvelope) -> bool:
        return self.orderer.broadcast(envelope, self.tick)

    def cut(self) -> list[ValidationVerdict]:
        """Flush the orderer and commit every new block at every peer."""
        out: list[ValidationVerdict] = []
        for block in self.orderer.tick(self.tick, force=True):
            results = [peer.commit(block) for peer in self.peers.values()]
            for v in results[0]:
                self.verdicts[v.tx_id] = v
            out.extend(results[0])
        self.tick += 1
        return out

    def invoke(self, client: str, chaincode_id: str, operation: str, args: Sequence[Any] = ()) -> InvokeResult:
        """Endorse, order and commit one transaction.

        Endorsement failures (chaincode rejection, budget) come back as an
        ``InvokeResult`` with no verdict and the failure text as response.
        """
        try:
            env = self.propose(client, chaincode_id, operation, args)
        except EndorsementFailure as exc:
            return InvokeResult(b"", str(exc).encode(), None)
        self.submit(env)
        self.cut()
        response = env.endorsements[0].response
        return InvokeResult(env.tx_id, response, self.verdicts.get(env.tx_id), self.events.get(env.tx_id, ()))

    def state_hash(self) -> bytes:
        hashes = {p.state.state_hash() for p in self.peers.values()}
        if len(hashes) != 1:
            raise AssertionError("peers diverged")
        return hashes.pop()

