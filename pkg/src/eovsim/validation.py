"""Validation phase: endorsement policy check, MVCC conflict check, atomic commit."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .endorsement import evaluate_policy, verify_endorsement
from .ledger import (
    VALID,
    Block,
    BlockStore,
    ChannelConfig,
    IdentityRegistry,
    TransactionEnvelope,
    Validity,
    derive_tx_id,
    invalid,
)
from .state import StateStore, Version

POLICY_UNSATISFIED = "policy-unsatisfied"
MVCC_CONFLICT = "mvcc-conflict"
BAD_SIGNATURE = "bad-signature"
MALFORMED = "malformed"
EXECUTION_FAILED = "execution-failed"  # order-execute pipeline only


class PeerHalted(RuntimeError):
    """Commit could not complete atomically; the peer stops."""


@dataclass(frozen=True)
class ValidationVerdict:
    block: int
    tx_seq: int
    tx_id: bytes
    validity: Validity

    @property
    def valid(self) -> bool:
        return self.validity.flag == "valid"

    def csv_row(self) -> list:
        return [self.block, self.tx_seq, self.tx_id.hex(), self.validity.flag, self.validity.reason or ""]


VERDICT_HEADER = ["block", "txseq", "txid", "flag", "reason"]


def _malformed(tx: TransactionEnvelope) -> str | None:
    if not isinstance(tx.tx_id, bytes) or tx.tx_id != derive_tx_id(tx.client, tx.nonce):
        return "tx-id does not derive from client and nonce"
    if not tx.endorsements:
        return "no endorsements"
    first = tx.endorsements[0].rwset_digest()
    for e in tx.endorsements:
        if e.tx_id != tx.tx_id or e.chaincode_id != tx.chaincode_id:
            return "endorsement metadata does not match transaction"
        if e.rwset_digest() != first:
            return "endorsements disagree on read/write sets"
    return None


def vscc_check(tx: TransactionEnvelope, config: ChannelConfig, registry: IdentityRegistry | None = None) -> Validity:
    """Default VSCC: signatures verify and the verified signers satisfy the policy."""
    registry = registry or config.registry()
    if _malformed(tx) is not None:
        return invalid(MALFORMED)
    policy = config.endorsement_policy(tx.chaincode_id)
    if policy is None:
        return invalid(MALFORMED)
    if tx.client_signature is None or tx.client_signature.signer != tx.client:
        return invalid(BAD_SIGNATURE)
    if not registry.verify(tx.client_signature, tx.signing_bytes()):
        return invalid(BAD_SIGNATURE)
    verified = [e for e in tx.endorsements if verify_endorsement(e, registry)]
    if not verified:
        return invalid(BAD_SIGNATURE)
    if not evaluate_policy(policy, verified, registry):
        return invalid(POLICY_UNSATISFIED)
    return VALID


def _current_version(key: bytes, state: StateStore, overlay: dict[bytes, Version] | None):
    if overlay is not None and key in overlay:
        return overlay[key]
    return state.committed_version(key)


def mvcc_check(tx: TransactionEnvelope, state: StateStore, overlay: dict[bytes, Version] | None = None) -> Validity:
    """Every read version must equal the key's current version.

    ``overlay`` carries versions written by earlier valid transactions of the
    block being validated.
    """
    for key, version in tx.read_set.entries:
        if _current_version(key, state, overlay) != version:
            return invalid(MVCC_CONFLICT)
    return VALID


def validate_block(block: Block, state: StateStore, config: ChannelConfig, registry: IdentityRegistry | None = None) -> list[ValidationVerdict]:
    registry = registry or config.registry()
    # VSCC verdicts are independent per transaction.
    vscc = [vscc_check(tx, config, registry) for tx in block.txs]
    overlay: dict[bytes, Version] = {}
    seen_ids: set[bytes] = set()
    verdicts = []
    for i, (tx, first) in enumerate(zip(block.txs, vscc)):
        verdict = first
        if verdict.flag == "valid" and tx.tx_id in seen_ids:
            verdict = invalid(MALFORMED)
        if verdict.flag == "valid":
            verdict = mvcc_check(tx, state, overlay)
        if verdict.flag == "valid":
            at = Version(block.seq, i)
            for key in tx.write_set.keys():
                overlay[key] = at
        seen_ids.add(tx.tx_id)
        verdicts.append(ValidationVerdict(block.seq, i, tx.tx_id, verdict))
    return verdicts


def commit_block(store: BlockStore, state: StateStore, block: Block, verdicts: Sequence[ValidationVerdict]) -> None:
    """Append ``block`` with its flags and apply valid writesets in order."""
    if len(verdicts) != len(block.txs):
        raise PeerHalted("verdicts incomplete for block")
    try:
        store.append_block(block, [v.validity for v in verdicts])
        for i, (tx, v) in enumerate(zip(block.txs, verdicts)):
            if v.valid and tx.write_set is not None:
                state.apply_writeset(tx.write_set, Version(block.seq, i), tx.tx_id)
    except Exception as exc:
        raise PeerHalted(f"commit of block {block.seq} failed: {exc}") from exc


class PeerLedger:
    """A peer's ledger: block store, world state, and current channel config."""

    def __init__(self, genesis: Block):
        if genesis.config is None:
            raise ValueError("genesis must be a config block")
        self.store = BlockStore()
        self.state = StateStore()
        self.config = genesis.config
        self.registry = self.config.registry()
        self.verdicts: list[ValidationVerdict] = []
        self.store.append_block(genesis, [])

    @property
    def height(self) -> int:
        return self.store.height

    def commit(self, block: Block) -> list[ValidationVerdict]:
        if block.config is not None:
            if block.config.sequence != self.config.sequence + 1:
                raise PeerHalted(f"config block {block.seq} skips configuration sequence")
            self.store.append_block(block, [])
            self.config = block.config
            self.registry = self.config.registry()
            return []
        verdicts = validate_block(block, self.state, self.config, self.registry)
        commit_block(self.store, self.state, block, verdicts)
        self.verdicts.extend(verdicts)
        return verdicts


def replay_ledger(store: BlockStore) -> StateStore:
    """Rebuild world state by folding every valid writeset in ledger order."""
    state = StateStore()
    for seq, i, tx, validity in store.transactions():
        if validity.flag == "valid" and tx.write_set is not None:
            state.apply_writeset(tx.write_set, Version(seq, i), tx.tx_id)
    return state


def verdicts_csv(verdicts: Iterable[ValidationVerdict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERDICT_HEADER)
    for v in verdicts:
        w.writerow(v.csv_row())
    return buf.getvalue()
