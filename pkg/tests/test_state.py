import random

import pytest
from hypothesis import given, strategies as st

from eovsim.state import (
    ReadSet,
    StateStore,
    Version,
    VersionRegression,
    WriteSet,
    fold_writesets,
    parse_dump_line,
)


def test_fresh_state_is_empty():
    s = StateStore()
    assert s.get_committed(b"k1") is None
    assert s.get_history_for_key(b"k1") == []


def test_write_then_read_returns_triple():
    s = StateStore()
    s.apply_writeset(WriteSet(((b"k1", b"v1"),)), Version(0, 0))
    e = s.get_committed(b"k1")
    assert (e.key, e.value, e.version) == (b"k1", b"v1", (0, 0))


def test_delete_keeps_history():
    s = StateStore()
    s.apply_writeset(WriteSet(((b"k1", b"v1"),)), Version(0, 0))
    s.apply_writeset(WriteSet(((b"k1", None),)), Version(2, 0))
    assert s.get_committed(b"k1") is None
    h = s.get_history_for_key(b"k1")
    assert len(h) == 2 and h[-1].is_delete
    # The tombstone version stays visible for MVCC.
    assert s.committed_version(b"k1") == Version(2, 0)


def test_writeset_applies_at_one_version():
    s = StateStore()
    s.apply_writeset(WriteSet(((b"a", b"1"), (b"b", b"2"))), Version(1, 0))
    assert s.get_committed(b"a").version == s.get_committed(b"b").version == Version(1, 0)
    s.apply_writeset(WriteSet(((b"a", None),)), Version(2, 3))
    assert s.get_committed(b"a") is None and s.committed_version(b"a") == Version(2, 3)


def test_last_write_per_key_wins():
    ws = WriteSet(((b"a", b"1"), (b"b", b"2"), (b"a", b"3")))
    assert ws.collapsed() == [(b"b", b"2"), (b"a", b"3")]
    s = StateStore()
    s.apply_writeset(ws, Version(1, 0))
    assert s.values() == {b"a": b"3", b"b": b"2"}


def test_history_write_overwrite_delete():
    s = StateStore()
    for i, v in enumerate([b"x", b"y", None]):
        s.apply_writeset(WriteSet(((b"k", v),)), Version(i + 1, 0), tx_id=bytes([i]))
    h = s.get_history_for_key(b"k")
    assert [e.value for e in h] == [b"x", b"y", None]
    assert [e.version for e in h] == sorted(e.version for e in h)
    assert [e.tx_id for e in h] == [b"\x00", b"\x01", b"\x02"]


def test_version_regression_is_fatal():
    s = StateStore()
    s.apply_writeset(WriteSet(((b"a", b"1"),)), Version(3, 1))
    with pytest.raises(VersionRegression):
        s.apply_writeset(WriteSet(((b"a", b"2"),)), Version(3, 1))
    with pytest.raises(VersionRegression):
        s.apply_writeset(WriteSet(((b"a", b"2"),)), Version(2, 9))
    assert s.get_committed(b"a").value == b"1"


def test_read_set_keys_unique():
    with pytest.raises(ValueError):
        ReadSet(((b"a", None), (b"a", Version(0, 0))))


def test_dump_lines_roundtrip():
    s = StateStore()
    s.apply_writeset(WriteSet(((b"a b\t/%", b"\x00\xff"), (b"z", b""))), Version(4, 2))
    lines = s.dump_lines()
    assert lines[0].split("\t")[1:] == ["00ff", "4.2"]
    assert [parse_dump_line(l) for l in lines] == [(k, v, ver) for k, (v, ver) in sorted(s.snapshot().items())]


def test_state_hash_with_and_without_versions():
    a, b = StateStore(), StateStore()
    a.apply_writeset(WriteSet(((b"k", b"v"),)), Version(1, 0))
    b.apply_writeset(WriteSet(((b"k", b"v"),)), Version(5, 3))
    assert a.state_hash(False) == b.state_hash(False)
    assert a.state_hash() != b.state_hash()


def _random_commits(rng, n, keys=20):
    """(writeset, version, tx_id) triples at strictly increasing versions."""
    out = []
    seq, i = 1, 0
    for t in range(n):
        writes = []
        for _ in range(rng.randint(1, 3)):
            k = b"k%d" % rng.randrange(keys)
            writes.append((k, None if rng.random() < 0.15 else b"%d" % rng.randrange(1000)))
        out.append((WriteSet(tuple(writes)), Version(seq, i), t.to_bytes(4, "big")))
        i += 1
        if rng.random() < 0.2:
            seq, i = seq + 1, 0
    return out


def test_versions_monotonic_and_model_agrees_over_10k_commits():
    rng = random.Random(7)
    commits = _random_commits(rng, 10_000)
    s = StateStore()
    model: dict[bytes, tuple[bytes | None, Version]] = {}
    writes_per_key: dict[bytes, int] = {}
    last_seen: dict[bytes, Version] = {}
    for ws, at, tx in commits:
        s.apply_writeset(ws, at, tx)
        for k, v in ws.entries:
            model[k] = (v, at)
        for k in {k for k, _ in ws.entries}:
            writes_per_key[k] = writes_per_key.get(k, 0) + 1
            assert last_seen.get(k, Version(-1, -1)) < s.committed_version(k)
            last_seen[k] = s.committed_version(k)
    live = {k: (v, ver) for k, (v, ver) in model.items() if v is not None}
    assert s.snapshot() == live
    for k, n in writes_per_key.items():
        assert len(s.get_history_for_key(k)) == n


@given(st.integers(0, 2**32))
def test_fold_of_writesets_reconstructs_state(seed):
    commits = _random_commits(random.Random(seed), 60, keys=6)
    live = StateStore()
    for ws, at, tx in commits:
        live.apply_writeset(ws, at, tx)
    rebuilt = fold_writesets(commits)
    assert rebuilt.dump_lines() == live.dump_lines()
    assert rebuilt.state_hash() == live.state_hash()
