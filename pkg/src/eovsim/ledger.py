"""Transactions, blocks, the hash chain, block storage and channel configuration."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from . import crypto
from .codec import DecodeError, decode, encode
from .policy import PolicyError, as_policy, evaluate, parse_policy

ZERO_HASH = bytes(crypto.DIGEST_SIZE)
REGISTERED_BACKENDS = ("solo", "cft-replicated")


class LedgerError(Exception):
    pass


class GapError(LedgerError):
    """Append would skip (or repeat) a sequence number."""


class HashMismatchError(LedgerError):
    """Block does not link to the hash of its predecessor."""


class InvalidConfigError(LedgerError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


class ConfigUpdateRejected(LedgerError):
    pass


class ChainIntegrityError(LedgerError):
    def __init__(self, seq: int, reason: str):
        super().__init__(f"block {seq}: {reason}")
        self.seq = seq
        self.reason = reason


# -- identities and signatures ------------------------------------------------


@dataclass(frozen=True)
class Identity:
    id: str
    org: str
    public_key: bytes
    role: str = "member"

    def to_wire(self):
        return (self.id, self.org, self.public_key, self.role)

    @classmethod
    def from_wire(cls, w) -> "Identity":
        return cls(*w)


@dataclass(frozen=True)
class Signature:
    signer: str
    bytes: bytes

    def to_wire(self):
        return (self.signer, self.bytes)

    @classmethod
    def from_wire(cls, w) -> "Signature":
        return cls(*w)


@dataclass(frozen=True)
class Signer:
    """An identity together with its signing secret."""

    identity: Identity
    secret: bytes = field(repr=False)

    @property
    def id(self) -> str:
        return self.identity.id

    @property
    def org(self) -> str:
        return self.identity.org

    def sign(self, message: bytes) -> Signature:
        return Signature(self.identity.id, crypto.scheme().sign(self.secret, message))


def make_signer(identity_id: str, org: str, role: str = "member", seed: bytes | None = None) -> Signer:
    seed = seed if seed is not None else f"{org}/{identity_id}".encode()
    secret, public = crypto.scheme().keygen(seed)
    return Signer(Identity(identity_id, org, public, role), secret)


class IdentityRegistry:
    """Per-channel identity registry (the simplified membership service)."""

    def __init__(self, identities: Iterable[Identity] = ()):
        self._by_id: dict[str, Identity] = {}
        for ident in identities:
            self.add(ident)

    def add(self, ident: Identity) -> None:
        if ident.id in self._by_id:
            raise InvalidConfigError("identities", f"duplicate identity id {ident.id!r}")
        if not ident.public_key:
            raise InvalidConfigError("identities", f"empty public key for {ident.id!r}")
        self._by_id[ident.id] = ident

    def get(self, identity_id: str) -> Identity | None:
        return self._by_id.get(identity_id)

    def __contains__(self, identity_id: str) -> bool:
        return identity_id in self._by_id

    def __iter__(self):
        return iter(self._by_id.values())

    def verify(self, signature: Signature, message: bytes) -> bool:
        ident = self._by_id.get(signature.signer)
        if ident is None:
            return False
        return crypto.scheme().verify(ident.public_key, message, signature.bytes)


# -- transactions -------------------------------------------------------------


def derive_tx_id(client: str, nonce: int) -> bytes:
    # Nonstandard: H(client || nonce) over the canonical encoding.
    return crypto.H(encode((client, nonce)))


@dataclass(frozen=True)
class Validity:
    flag: str = "pending"  # pending | valid | invalid
    reason: str | None = None

    def to_wire(self):
        return (self.flag, self.reason)

    @classmethod
    def from_wire(cls, w) -> "Validity":
        return cls(*w)

    def __str__(self) -> str:
        return self.flag if self.reason is None else f"{self.flag}({self.reason})"


PENDING = Validity()
VALID = Validity("valid")


def invalid(reason: str) -> Validity:
    return Validity("invalid", reason)


@dataclass(frozen=True)
class TransactionEnvelope:
    tx_id: bytes
    client: str
    chaincode_id: str
    operation: str
    args: tuple[bytes, ...]
    nonce: int
    endorsements: tuple = ()
    client_signature: Signature | None = None
    validity: Validity = PENDING

    def body_wire(self):
        return (
            self.tx_id,
            self.client,
            self.chaincode_id,
            self.operation,
            tuple(self.args),
            self.nonce,
            tuple(e.to_wire() for e in self.endorsements),
        )

    def signing_bytes(self) -> bytes:
        return encode(self.body_wire())

    def to_wire(self):
        # Validity is peer-local metadata and never part of hashed bytes.
        sig = self.client_signature.to_wire() if self.client_signature else None
        return (self.body_wire(), sig)

    @classmethod
    def from_wire(cls, w) -> "TransactionEnvelope":
        from .endorsement import Endorsement

        body, sig = w
        tx_id, client, cc, op, args, nonce, ends = body
        return cls(
            tx_id=tx_id,
            client=client,
            chaincode_id=cc,
            operation=op,
            args=tuple(args),
            nonce=nonce,
            endorsements=tuple(Endorsement.from_wire(e) for e in ends),
            client_signature=Signature.from_wire(sig) if sig is not None else None,
        )

    def signed_by(self, client: Signer) -> "TransactionEnvelope":
        return replace(self, client_signature=client.sign(self.signing_bytes()))

    @property
    def read_set(self):
        return self.endorsements[0].read_set if self.endorsements else None

    @property
    def write_set(self):
        return self.endorsements[0].write_set if self.endorsements else None


def new_envelope(
    client: Signer,
    chaincode_id: str,
    operation: str,
    args: Sequence[bytes],
    nonce: int,
    endorsements: Sequence = (),
) -> TransactionEnvelope:
    env = TransactionEnvelope(
        tx_id=derive_tx_id(client.id, nonce),
        client=client.id,
        chaincode_id=chaincode_id,
        operation=operation,
        args=tuple(args),
        nonce=nonce,
        endorsements=tuple(endorsements),
    )
    return env.signed_by(client)


# -- channel configuration ----------------------------------------------------


def _freeze(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _freeze(v) for k, v in value.items()}
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class ChannelConfig:
    channel_id: str
    identities: tuple[Identity, ...]
    orderers: tuple[str, ...]
    consensus: Mapping[str, Any]
    access_rules: Mapping[str, str]
    modification_rules: Mapping[str, str] | None
    endorsement_policies: Mapping[str, str] = field(default_factory=dict)
    invoke_grants: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    sequence: int = 0

    def to_wire(self):
        return (
            self.channel_id,
            tuple(i.to_wire() for i in self.identities),
            tuple(self.orderers),
            dict(self.consensus),
            dict(self.access_rules),
            dict(self.modification_rules) if self.modification_rules is not None else None,
            dict(self.endorsement_policies),
            {k: tuple(v) for k, v in self.invoke_grants.items()},
            self.sequence,
        )

    @classmethod
    def from_wire(cls, w) -> "ChannelConfig":
        cid, ids, orderers, consensus, access, mods, eps, grants, seq = w
        return cls(
            channel_id=cid,
            identities=tuple(Identity.from_wire(i) for i in ids),
            orderers=tuple(orderers),
            consensus=dict(consensus),
            access_rules=dict(access),
            modification_rules=dict(mods) if mods is not None else None,
            endorsement_policies=dict(eps),
            invoke_grants={k: tuple(v) for k, v in grants.items()},
            sequence=seq,
        )

    @property
    def backend(self) -> str:
        return self.consensus.get("backend", "")

    def registry(self) -> IdentityRegistry:
        return IdentityRegistry(self.identities)

    def endorsement_policy(self, chaincode_id: str):
        text = self.endorsement_policies.get(chaincode_id, self.endorsement_policies.get("*"))
        return parse_policy(text) if text is not None else None

    def may_invoke(self, caller: str, callee: str) -> bool:
        granted = self.invoke_grants.get(caller, ())
        return caller == callee or callee in granted or "*" in granted

    def validate(self) -> None:
        if not self.channel_id:
            raise InvalidConfigError("channel_id", "must be non-empty")
        if not self.modification_rules:
            raise InvalidConfigError("modification_rules", "missing")
        IdentityRegistry(self.identities)
        if self.backend not in REGISTERED_BACKENDS:
            raise InvalidConfigError("consensus.backend", f"unregistered backend {self.backend!r}")
        if not self.orderers:
            raise InvalidConfigError("orderers", "at least one orderer address required")
        if self.backend == "cft-replicated":
            f = int(self.consensus.get("f_tolerated", 1))
            if len(self.orderers) < 2 * f + 1:
                raise InvalidConfigError(
                    "orderers", f"cft-replicated with f={f} needs >= {2 * f + 1} orderers"
                )
        for section, rules in (
            ("access_rules", self.access_rules),
            ("modification_rules", self.modification_rules),
            ("endorsement_policies", self.endorsement_policies),
        ):
            for key, text in rules.items():
                try:
                    parse_policy(text)
                except PolicyError as exc:
                    raise InvalidConfigError(f"{section}.{key}", str(exc)) from None


def build_genesis(config: ChannelConfig) -> "Block":
    config.validate()
    return Block(seq=0, prev_hash=ZERO_HASH, txs=(), config=config)


_CONFIG_FIELDS = {
    "identities",
    "orderers",
    "consensus",
    "access_rules",
    "modification_rules",
    "endorsement_policies",
    "invoke_grants",
}


@dataclass(frozen=True)
class ConfigUpdate:
    channel_id: str
    base_sequence: int
    delta: Mapping[str, Any]
    signatures: tuple[Signature, ...] = ()

    def signing_bytes(self) -> bytes:
        return encode((self.channel_id, self.base_sequence, _delta_wire(self.delta)))

    def signed(self, *signers: Signer) -> "ConfigUpdate":
        msg = self.signing_bytes()
        return replace(self, signatures=self.signatures + tuple(s.sign(msg) for s in signers))


def _delta_wire(delta: Mapping[str, Any]) -> dict:
    out = {}
    for k, v in delta.items():
        if k == "identities":
            out[k] = tuple(i.to_wire() for i in v)
        else:
            out[k] = _freeze(v)
    return out


def apply_config_update(current: ChannelConfig, update: ConfigUpdate) -> ChannelConfig:
    """Return the next config iff the update is authorized under ``current``."""
    if update.channel_id != current.channel_id:
        raise ConfigUpdateRejected("update targets a different channel")
    if update.base_sequence != current.sequence:
        raise ConfigUpdateRejected(
            f"stale update: based on {update.base_sequence}, current is {current.sequence}"
        )
    unknown = set(update.delta) - _CONFIG_FIELDS
    if unknown or not update.delta:
        raise ConfigUpdateRejected(f"malformed delta fields: {sorted(unknown) or 'empty'}")
    registry = current.registry()
    msg = update.signing_bytes()
    signers = [
        registry.get(s.signer) for s in update.signatures if registry.verify(s, msg)
    ]
    rules = current.modification_rules or {}
    for name in sorted(update.delta):
        rule = rules.get(name, rules.get("*"))
        if rule is None:
            raise ConfigUpdateRejected(f"no modification rule covers {name!r}")
        if not evaluate(as_policy(rule), signers):
            raise ConfigUpdateRejected(f"signatures do not satisfy rule for {name!r}: {rule}")
    changes = dict(update.delta)
    if "identities" in changes:
        changes["identities"] = tuple(changes["identities"])
    if "orderers" in changes:
        changes["orderers"] = tuple(changes["orderers"])
    new = replace(current, **changes, sequence=current.sequence + 1)
    try:
        new.validate()
    except InvalidConfigError as exc:
        raise ConfigUpdateRejected(f"resulting config invalid: {exc}") from None
    return new


def build_config_block(prev: "Block", config: ChannelConfig) -> "Block":
    return Block(seq=prev.seq + 1, prev_hash=hash_block(prev), txs=(), config=config)


# -- blocks -------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    seq: int
    prev_hash: bytes
    txs: tuple[TransactionEnvelope, ...] = ()
    config: ChannelConfig | None = None

    def __post_init__(self):
        if self.config is not None and self.txs:
            raise ValueError("a config block carries no ordinary transactions")

    def to_wire(self):
        return (
            self.seq,
            self.prev_hash,
            tuple(tx.to_wire() for tx in self.txs),
            self.config.to_wire() if self.config is not None else None,
        )

    @classmethod
    def from_wire(cls, w) -> "Block":
        seq, prev, txs, cfg = w
        return cls(
            seq=seq,
            prev_hash=prev,
            txs=tuple(TransactionEnvelope.from_wire(t) for t in txs),
            config=ChannelConfig.from_wire(cfg) if cfg is not None else None,
        )

    @property
    def block_hash(self) -> bytes:
        return hash_block(self)

    @property
    def is_config(self) -> bool:
        return self.config is not None


def hash_block(block: Block) -> bytes:
    return crypto.H(encode(block.to_wire()))


@dataclass(frozen=True)
class CommitReceipt:
    seq: int
    block_hash: bytes


def encode_record(block: Block, flags: Sequence[Validity] | None = None) -> bytes:
    """Storage record: block, its hash, validity flags and a digest over the flags."""
    flags_wire = tuple(f.to_wire() for f in flags) if flags is not None else None
    return encode((block.to_wire(), hash_block(block), flags_wire, crypto.H(encode(flags_wire))))


def decode_record(raw: bytes) -> tuple[Block, bytes, tuple[Validity, ...] | None, bytes]:
    block_w, stored_hash, flags_w, flags_digest = decode(raw)
    flags = tuple(Validity.from_wire(f) for f in flags_w) if flags_w is not None else None
    return Block.from_wire(block_w), stored_hash, flags, flags_digest


class BlockStore:
    """Append-only, hash-chained block store for one channel."""

    def __init__(self) -> None:
        self._blocks: list[Block] = []
        self._hashes: list[bytes] = []
        self._flags: list[tuple[Validity, ...] | None] = []

    def __len__(self) -> int:
        return len(self._blocks)

    @property
    def height(self) -> int:
        """Sequence number of the last block, ``-1`` when empty."""
        return len(self._blocks) - 1

    def append_block(self, block: Block, flags: Sequence[Validity] | None = None) -> CommitReceipt:
        expected = len(self._blocks)
        if block.seq != expected:
            raise GapError(f"expected block {expected}, got {block.seq}")
        if expected == 0:
            if block.prev_hash != ZERO_HASH:
                raise HashMismatchError("genesis prev-hash must be all zero")
        elif block.prev_hash != self._hashes[-1]:
            raise HashMismatchError(f"block {block.seq} does not link to block {expected - 1}")
        if flags is not None and len(flags) != len(block.txs):
            raise LedgerError("one validity flag per transaction required")
        h = hash_block(block)
        self._blocks.append(block)
        self._hashes.append(h)
        self._flags.append(tuple(flags) if flags is not None else None)
        return CommitReceipt(block.seq, h)

    def block(self, seq: int) -> Block:
        return self._blocks[seq]

    def get(self, seq: int) -> Block | None:
        return self._blocks[seq] if 0 <= seq < len(self._blocks) else None

    def hash_at(self, seq: int) -> bytes:
        return self._hashes[seq]

    def flags(self, seq: int) -> tuple[Validity, ...] | None:
        return self._flags[seq]

    def blocks(self) -> list[Block]:
        return list(self._blocks)

    def record(self, seq: int) -> bytes:
        return encode_record(self._blocks[seq], self._flags[seq])

    def records(self) -> list[bytes]:
        return [self.record(i) for i in range(len(self._blocks))]

    def tip_hash(self) -> bytes:
        return self._hashes[-1] if self._hashes else ZERO_HASH

    def latest_config(self) -> ChannelConfig | None:
        for block in reversed(self._blocks):
            if block.config is not None:
                return block.config
        return None

    def transactions(self):
        """Yield ``(seq, tx_seq, tx, validity)`` for every stored transaction."""
        for seq, block in enumerate(self._blocks):
            flags = self._flags[seq]
            for i, tx in enumerate(block.txs):
                yield seq, i, tx, flags[i] if flags is not None else PENDING


def verify_records(records: Sequence[bytes]) -> int:
    """Re-hash every stored record; returns the verified count.

    Raises :class:`ChainIntegrityError` naming the first offending block.
    """
    prev = ZERO_HASH
    for i, raw in enumerate(records):
        try:
            block, stored, flags, flags_digest = decode_record(raw)
        except (DecodeError, ValueError, TypeError) as exc:
            raise ChainIntegrityError(i, f"undecodable record ({exc})") from None
        if block.seq != i:
            raise ChainIntegrityError(i, f"sequence {block.seq} out of place")
        if hash_block(block) != stored:
            raise ChainIntegrityError(i, "content does not match stored hash")
        flags_wire = tuple(f.to_wire() for f in flags) if flags is not None else None
        if crypto.H(encode(flags_wire)) != flags_digest:
            raise ChainIntegrityError(i, "validity metadata tampered")
        if block.prev_hash != prev:
            raise ChainIntegrityError(i, "prev-hash does not match predecessor")
        prev = stored
    return len(records)


def verify_chain(store: BlockStore) -> int:
    return verify_records(store.records())


# -- block file format --------------------------------------------------------

_LEN = struct.Struct(">I")
_INDEX = struct.Struct(">QQ")
BLOCKS_FILE = "blocks.dat"
INDEX_FILE = "index.dat"


def write_blockfile(directory: str | os.PathLike, records: Iterable[bytes]) -> None:
    os.makedirs(directory, exist_ok=True)
    offset = 0
    with open(os.path.join(directory, BLOCKS_FILE), "wb") as data, open(
        os.path.join(directory, INDEX_FILE), "wb"
    ) as index:
        for seq, raw in enumerate(records):
            index.write(_INDEX.pack(seq, offset))
            data.write(_LEN.pack(len(raw)) + raw)
            offset += _LEN.size + len(raw)


def read_blockfile(directory: str | os.PathLike) -> list[bytes]:
    with open(os.path.join(directory, BLOCKS_FILE), "rb") as fh:
        data = fh.read()
    records, pos = [], 0
    while pos < len(data):
        if pos + _LEN.size > len(data):
            raise ChainIntegrityError(len(records), "truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + n > len(data):
            raise ChainIntegrityError(len(records), "truncated record")
        records.append(data[pos : pos + n])
        pos += n
    return records


def read_index(directory: str | os.PathLike) -> dict[int, int]:
    with open(os.path.join(directory, INDEX_FILE), "rb") as fh:
        data = fh.read()
    return {seq: off for seq, off in _INDEX.iter_unpack(data)}


def load_store(directory: str | os.PathLike) -> BlockStore:
    store = BlockStore()
    for raw in read_blockfile(directory):
        block, _, flags, _ = decode_record(raw)
        store.append_block(block, flags)
    return store
