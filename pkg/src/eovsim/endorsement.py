"""Endorsing simulation results, evaluating endorsement policies, and client-side collection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from . import crypto
from .chaincode import Proposal, SimulationError, SimulationResult
from .codec import encode
from .ledger import IdentityRegistry, Signature, Signer, TransactionEnvelope, new_envelope
from .policy import Policy, as_policy, evaluate
from .state import ReadSet, WriteSet


@dataclass(frozen=True)
class Endorsement:
    endorser: str
    read_set: ReadSet
    write_set: WriteSet
    response: bytes
    chaincode_id: str
    tx_id: bytes
    signature: Signature | None = None

    def payload_wire(self):
        return (
            self.endorser,
            self.read_set.to_wire(),
            self.write_set.to_wire(),
            self.response,
            self.chaincode_id,
            self.tx_id,
        )

    def signing_bytes(self) -> bytes:
        return encode(self.payload_wire())

    def rwset_digest(self) -> bytes:
        """Digest of everything endorsers must agree on."""
        return crypto.H(encode((self.read_set.to_wire(), self.write_set.to_wire(), self.response)))

    def to_wire(self):
        sig = self.signature.to_wire() if self.signature is not None else None
        return (self.payload_wire(), sig)

    @classmethod
    def from_wire(cls, w) -> "Endorsement":
        (endorser, rs, ws, response, cc, tx_id), sig = w
        return cls(
            endorser=endorser,
            read_set=ReadSet.from_wire(rs),
            write_set=WriteSet.from_wire(ws),
            response=response,
            chaincode_id=cc,
            tx_id=tx_id,
            signature=Signature.from_wire(sig) if sig is not None else None,
        )


@dataclass(frozen=True)
class ProposalResponse:
    endorser: str
    status: str  # "ok" | "failure"
    endorsement: Endorsement | None = None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def endorse(endorser: Signer, proposal: Proposal, sim: SimulationResult | SimulationError) -> ProposalResponse:
    """Default ESCC: sign the simulation results with the peer's identity."""
    if isinstance(sim, SimulationError):
        return ProposalResponse(endorser.id, "failure", None, f"{sim.reason}: {sim}")
    unsigned = Endorsement(
        endorser=endorser.id,
        read_set=sim.read_set,
        write_set=sim.write_set,
        response=sim.response,
        chaincode_id=proposal.chaincode_id,
        tx_id=proposal.tx_id,
    )
    signed = replace(unsigned, signature=endorser.sign(unsigned.signing_bytes()))
    return ProposalResponse(endorser.id, "ok", signed)


def verify_endorsement(e: Endorsement, registry: IdentityRegistry) -> bool:
    if e.signature is None or e.signature.signer != e.endorser:
        return False
    return registry.verify(e.signature, e.signing_bytes())


def evaluate_policy(policy: Policy | str, endorsements: Iterable[Endorsement], registry: IdentityRegistry) -> bool:
    """True iff the (de-duplicated) endorser identities satisfy ``policy``.

    Signatures are expected to be verified by the caller.
    """
    signers, seen = [], set()
    for e in endorsements:
        ident = registry.get(e.endorser)
        if ident is not None and ident.id not in seen:
            seen.add(ident.id)
            signers.append(ident)
    return evaluate(as_policy(policy), signers)


class EndorsementFailure(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass
class EndorsementCollector:
    """Accumulates proposal responses in arrival order.

    Endorsements are grouped by the digest of their read/write sets and
    response; the first group whose signers satisfy the policy wins.
    """

    client: Signer
    proposal: Proposal
    policy: Policy
    registry: IdentityRegistry
    groups: dict[bytes, list[Endorsement]] = field(default_factory=dict)
    failures: list[ProposalResponse] = field(default_factory=list)
    rejected_signatures: int = 0
    envelope: TransactionEnvelope | None = None

    def add(self, response: ProposalResponse) -> TransactionEnvelope | None:
        if self.envelope is not None:
            return self.envelope
        if not response.ok or response.endorsement is None:
            self.failures.append(response)
            return None
        e = response.endorsement
        if (
            e.tx_id != self.proposal.tx_id
            or e.chaincode_id != self.proposal.chaincode_id
            or not verify_endorsement(e, self.registry)
        ):
            self.rejected_signatures += 1
            return None
        group = self.groups.setdefault(e.rwset_digest(), [])
        if any(x.endorser == e.endorser for x in group):
            return None
        group.append(e)
        if evaluate_policy(self.policy, group, self.registry):
            p = self.proposal
            self.envelope = new_envelope(
                self.client, p.chaincode_id, p.operation, p.args, p.nonce, endorsements=group
            )
        return self.envelope

    def failure(self, timed_out: bool = False) -> EndorsementFailure:
        if len(self.groups) > 1:
            return EndorsementFailure("mismatch", f"{len(self.groups)} distinct read/write sets")
        if timed_out:
            return EndorsementFailure("timeout")
        if self.failures and not self.groups:
            return EndorsementFailure("rejected", "; ".join(r.reason or "" for r in self.failures))
        return EndorsementFailure("insufficient", "policy not satisfied by matching endorsements")


def collect_endorsements(
    client: Signer,
    proposal: Proposal,
    responses: Iterable[tuple[int, ProposalResponse]] | Sequence[ProposalResponse],
    policy: Policy | str,
    registry: IdentityRegistry,
    timeout: int | None = None,
    start_tick: int = 0,
) -> TransactionEnvelope:
    """Build an envelope from responses gathered from the target endorsers.

    ``responses`` holds ``(arrival_tick, response)`` pairs (bare responses
    are taken to arrive at ``start_tick``). Responses after
    ``start_tick + timeout`` are ignored. Raises :class:`EndorsementFailure`.
    """
    collector = EndorsementCollector(client, proposal, as_policy(policy), registry)
    timed_out = False
    timed = [r if isinstance(r, tuple) else (start_tick, r) for r in responses]
    for tick, response in sorted(timed, key=lambda tr: tr[0]):
        if timeout is not None and tick > start_tick + timeout:
            timed_out = True
            break
        envelope = collector.add(response)
        if envelope is not None:
            return envelope
    raise collector.failure(timed_out)
