from dataclasses import replace

import pytest
from oracles import serializability_run

from eovsim.contracts import KVChaincode
from eovsim.ledger import Block, BlockStore, new_envelope
from eovsim.local import LocalChannel, make_channel
from eovsim.state import ReadSet, StateStore, Version, WriteSet
from eovsim.validation import (
    BAD_SIGNATURE,
    MALFORMED,
    MVCC_CONFLICT,
    POLICY_UNSATISFIED,
    PeerHalted,
    ValidationVerdict,
    commit_block,
    mvcc_check,
    replay_ledger,
    validate_block,
    verdicts_csv,
    vscc_check,
)


@pytest.fixture
def kv():
    return LocalChannel(make_channel(batch_max_txs=20), [KVChaincode()])


def reason(v):
    return v.validity.reason if hasattr(v, "validity") else v.reason


def resign(ch, env, **changes):
    return replace(env, **changes).signed_by(ch.setup.signer(env.client))


# -- VSCC -------------------------------------------------------------------------


def test_vscc_two_of_three_passes(kv):
    env = kv.propose("alice", "kv", "put", ("a", "1"))
    assert len(env.endorsements) == 2
    assert vscc_check(env, kv.setup.config).flag == "valid"


def test_vscc_single_endorsement_fails(kv):
    env = kv.propose("alice", "kv", "put", ("a", "1"), endorsers=["peer0.org1", "peer0.org2", "peer0.org3"])
    one = resign(kv, env, endorsements=env.endorsements[:1])
    assert vscc_check(one, kv.setup.config).reason == POLICY_UNSATISFIED


def _forged_subset_oracle(n_good: int):
    """Re-evaluate 2-of-3 over the endorsements whose signatures still verify."""
    if n_good == 0:
        return BAD_SIGNATURE
    return None if n_good >= 2 else POLICY_UNSATISFIED


@pytest.mark.parametrize("forge", [[], [0], [0, 1], [0, 1, 2]])
def test_vscc_forged_signature_excluded(kv, forge):
    p = kv.proposal("alice", "kv", "put", ("a", "1"))
    es = [kv.endorse_at(peer, p).endorsement for peer in kv.setup.peers]
    for i in forge:
        es[i] = replace(es[i], signature=replace(es[i].signature, bytes=b"\x00" * len(es[i].signature.bytes)))
    env = new_envelope(kv.setup.signer("alice"), "kv", "put", p.args, p.nonce, endorsements=es)
    assert vscc_check(env, kv.setup.config).reason == _forged_subset_oracle(3 - len(forge))


def test_vscc_malformed_and_client_signature(kv):
    env = kv.propose("alice", "kv", "put", ("a", "1"))
    cfg = kv.setup.config
    assert vscc_check(resign(kv, env, endorsements=()), cfg).reason == MALFORMED
    assert vscc_check(resign(kv, env, tx_id=b"\x01" * 32), cfg).reason == MALFORMED
    assert vscc_check(replace(env, args=(b"a", b"2")), cfg).reason == BAD_SIGNATURE
    assert vscc_check(replace(env, client_signature=None), cfg).reason == BAD_SIGNATURE


# -- MVCC ---------------------------------------------------------------------------


def _tx_reading(kv, reads, writes=()):
    env = kv.propose("alice", "kv", "put", ("z", "1"))
    e = replace(env.endorsements[0], read_set=ReadSet(tuple(reads)), write_set=WriteSet(tuple(writes)))
    return replace(env, endorsements=(e,))


def test_mvcc_rule(kv):
    s = StateStore()
    s.apply_writeset(WriteSet(((b"k", b"v"),)), Version(5, 2))
    assert mvcc_check(_tx_reading(kv, [(b"k", Version(5, 2))]), s).flag == "valid"
    assert mvcc_check(_tx_reading(kv, [(b"k", Version(5, 1))]), s).reason == MVCC_CONFLICT
    assert mvcc_check(_tx_reading(kv, [(b"absent", None)]), s).flag == "valid"
    assert mvcc_check(_tx_reading(kv, [(b"k", None)]), s).reason == MVCC_CONFLICT
    s.apply_writeset(WriteSet(((b"k", None),)), Version(6, 0))
    # A delete still bumps the version, so a stale read of the old value conflicts.
    assert mvcc_check(_tx_reading(kv, [(b"k", Version(5, 2))]), s).reason == MVCC_CONFLICT
    assert mvcc_check(_tx_reading(kv, [(b"k", Version(6, 0))]), s).flag == "valid"


def test_double_spend_in_one_block_first_wins(kv):
    kv.invoke("alice", "kv", "put", ("acct", "10"))
    a = kv.propose("alice", "kv", "move", ("acct", "x", "10"))
    b = kv.propose("bob", "kv", "move", ("acct", "y", "10"))
    kv.submit(a)
    kv.submit(b)
    verdicts = kv.cut()
    assert [v.validity.flag for v in verdicts] == ["valid", "invalid"]
    assert verdicts[1].validity.reason == MVCC_CONFLICT
    assert kv.query("alice", "kv", "get", ("acct",)) == b"0"
    assert kv.query("alice", "kv", "get", ("x",)) == b"10"
    assert kv.query("alice", "kv", "get", ("y",)) == b""
    # Both stay in the ledger.
    last = kv.reference.store.get(kv.reference.height)
    assert [tx.tx_id for tx in last.txs] == [a.tx_id, b.tx_id]


def test_blind_writes_never_conflict(kv):
    envs = [kv.propose(c, "kv", "put", ("k", c)) for c in ("alice", "bob")]
    for e in envs:
        kv.submit(e)
    assert [v.valid for v in kv.cut()] == [True, True]
    assert kv.query("alice", "kv", "get", ("k",)) == b"bob"


def test_stale_endorsement_across_blocks(kv):
    kv.invoke("alice", "kv", "put", ("c", "1"))
    stale = kv.propose("alice", "kv", "incr", ("c", "1"))
    assert kv.invoke("bob", "kv", "incr", ("c", "5")).valid
    kv.submit(stale)
    [v] = kv.cut()
    assert v.validity.reason == MVCC_CONFLICT
    assert kv.query("alice", "kv", "get", ("c",)) == b"6"


def test_duplicate_tx_in_block_marked_malformed(kv):
    env = kv.propose("alice", "kv", "put", ("k", "1"))
    block = Block(1, kv.reference.store.tip_hash(), (env, env))
    verdicts = validate_block(block, kv.reference.state, kv.setup.config)
    assert [reason(v) for v in verdicts] == [None, MALFORMED]


# -- commit --------------------------------------------------------------------------


def test_commit_keeps_invalid_and_applies_only_valid(kv):
    kv.invoke("alice", "kv", "put", ("acct", "3"))
    good = kv.propose("alice", "kv", "incr", ("acct", "1"))
    bad = kv.propose("bob", "kv", "incr", ("acct", "2"))
    third = kv.propose("bob", "kv", "put", ("other", "x"))
    for e in (good, bad, third):
        kv.submit(e)
    h = kv.reference.height
    verdicts = kv.cut()
    assert [v.valid for v in verdicts] == [True, False, True]
    assert kv.reference.height == h + 1
    assert len(kv.reference.store.get(h + 1).txs) == 3
    assert kv.reference.state.get_committed(b"kv\x00acct").version == Version(h + 1, 0)
    assert kv.reference.state.get_committed(b"kv\x00other").version == Version(h + 1, 2)
    assert [f.flag for f in kv.reference.store.flags(h + 1)] == ["valid", "invalid", "valid"]


def test_replay_reproduces_state(kv):
    for i in range(10):
        kv.invoke("alice", "kv", "incr", ("c", str(i)))
        kv.invoke("bob", "kv", "put", (f"k{i}", "v"))
    kv.invoke("bob", "kv", "del", ("k3",))
    assert replay_ledger(kv.reference.store).state_hash() == kv.reference.state.state_hash()


def test_incomplete_verdicts_halt_the_peer(kv):
    env = kv.propose("alice", "kv", "put", ("k", "1"))
    block = Block(1, kv.reference.store.tip_hash(), (env,))
    store, state = BlockStore(), StateStore()
    with pytest.raises(PeerHalted):
        commit_block(store, state, block, [])
    assert len(store) == 0 and len(state) == 0


def test_verdict_csv(kv):
    env = kv.propose("alice", "kv", "put", ("k", "1"))
    kv.submit(env)
    kv.cut()
    text = verdicts_csv(kv.reference.verdicts)
    assert text.splitlines() == ["block,txseq,txid,flag,reason", f"1,0,{env.tx_id.hex()},valid,"]
    assert ValidationVerdict(2, 1, b"\xab", replace(kv.reference.verdicts[0].validity, flag="invalid", reason=MVCC_CONFLICT)).csv_row() == [
        2, 1, "ab", "invalid", MVCC_CONFLICT
    ]


@pytest.mark.parametrize("seed", range(3))
def test_serial_oracle(seed):
    report = serializability_run(seed, 60)
    assert report.ok, report
    assert 0 < report.valid < report.txs
