"""Versioned key-value state (the peer transaction manager)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence
from urllib.parse import quote_from_bytes, unquote_to_bytes

from . import crypto
from .codec import encode


class Version(NamedTuple):
    block_seq: int
    tx_seq: int

    def __str__(self) -> str:
        return f"{self.block_seq}.{self.tx_seq}"


def version_wire(v: Version | None):
    return None if v is None else (v.block_seq, v.tx_seq)


def version_from_wire(w) -> Version | None:
    return None if w is None else Version(*w)


class VersionRegression(RuntimeError):
    """A writeset would move a key's version backwards. Simulator bug; abort."""


@dataclass(frozen=True)
class VersionedValue:
    key: bytes
    value: bytes
    version: Version
    tombstone: bool = False


@dataclass(frozen=True)
class ReadSet:
    entries: tuple[tuple[bytes, Version | None], ...] = ()

    def __post_init__(self):
        keys = [k for k, _ in self.entries]
        if len(keys) != len(set(keys)):
            raise ValueError("duplicate key in read set")

    def to_wire(self):
        return tuple((k, version_wire(v)) for k, v in self.entries)

    @classmethod
    def from_wire(cls, w) -> "ReadSet":
        return cls(tuple((k, version_from_wire(v)) for k, v in w))

    def keys(self) -> list[bytes]:
        return [k for k, _ in self.entries]


@dataclass(frozen=True)
class WriteSet:
    """Ordered writes; ``None`` as a value means delete."""

    entries: tuple[tuple[bytes, bytes | None], ...] = ()

    def to_wire(self):
        return tuple(self.entries)

    @classmethod
    def from_wire(cls, w) -> "WriteSet":
        return cls(tuple((k, v) for k, v in w))

    def collapsed(self) -> list[tuple[bytes, bytes | None]]:
        """Last write per key wins, keeping the order of those last writes."""
        last: dict[bytes, bytes | None] = {}
        for k, v in self.entries:
            last.pop(k, None)
            last[k] = v
        return list(last.items())

    def keys(self) -> list[bytes]:
        return [k for k, _ in self.collapsed()]


@dataclass(frozen=True)
class HistoryEntry:
    key: bytes
    version: Version
    value: bytes | None  # None records a delete
    tx_id: bytes

    @property
    def is_delete(self) -> bool:
        return self.value is None


class StateStore:
    def __init__(self) -> None:
        # Tombstones stay in _entries so their versions remain visible to MVCC.
        self._entries: dict[bytes, VersionedValue] = {}
        self._history: dict[bytes, list[HistoryEntry]] = {}

    def get_committed(self, key: bytes) -> VersionedValue | None:
        entry = self._entries.get(key)
        if entry is None or entry.tombstone:
            return None
        return entry

    def committed_version(self, key: bytes) -> Version | None:
        entry = self._entries.get(key)
        return entry.version if entry is not None else None

    def apply_writeset(self, ws: WriteSet, at: Version, tx_id: bytes = b"") -> None:
        writes = ws.collapsed()
        for key, _ in writes:
            current = self.committed_version(key)
            if current is not None and not at > current:
                raise VersionRegression(f"key {key!r}: {at} does not follow {current}")
        for key, value in writes:
            if value is None:
                self._entries[key] = VersionedValue(key, b"", at, tombstone=True)
            else:
                self._entries[key] = VersionedValue(key, value, at)
            self._history.setdefault(key, []).append(HistoryEntry(key, at, value, tx_id))

    def get_history_for_key(self, key: bytes) -> list[HistoryEntry]:
        return list(self._history.get(key, ()))

    def live_items(self) -> list[VersionedValue]:
        return [e for _, e in sorted(self._entries.items()) if not e.tombstone]

    def snapshot(self) -> dict[bytes, tuple[bytes, Version]]:
        return {e.key: (e.value, e.version) for e in self.live_items()}

    def values(self) -> dict[bytes, bytes]:
        return {e.key: e.value for e in self.live_items()}

    def state_hash(self, include_versions: bool = True) -> bytes:
        if include_versions:
            rows = [(e.key, e.value, tuple(e.version)) for e in self.live_items()]
        else:
            rows = [(e.key, e.value) for e in self.live_items()]
        return crypto.H(encode(rows))

    def dump_lines(self) -> list[str]:
        """``key<TAB>hex(value)<TAB>block.tx`` per live key; key is %-escaped."""
        return [
            f"{quote_from_bytes(e.key, safe='')}\t{e.value.hex()}\t{e.version}"
            for e in self.live_items()
        ]

    def __len__(self) -> int:
        return len(self.live_items())


def parse_dump_line(line: str) -> tuple[bytes, bytes, Version]:
    key, value, ver = line.rstrip("\n").split("\t")
    b, t = ver.split(".")
    return unquote_to_bytes(key), bytes.fromhex(value), Version(int(b), int(t))


def fold_writesets(items: Iterable[tuple[WriteSet, Version, bytes]]) -> StateStore:
    state = StateStore()
    for ws, at, tx_id in items:
        state.apply_writeset(ws, at, tx_id)
    return state


def merge_reads(*sets: Sequence[tuple[bytes, Version | None]]) -> ReadSet:
    seen: dict[bytes, Version | None] = {}
    for entries in sets:
        for k, v in entries:
            seen.setdefault(k, v)
    return ReadSet(tuple(seen.items()))
