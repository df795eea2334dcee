import itertools
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eovsim.chaincode import ChaincodeRegistry, StepBudget, make_proposal, simulate_proposal
from eovsim.contracts import KVChaincode, LoopChaincode
from eovsim.endorsement import (
    EndorsementFailure,
    collect_endorsements,
    endorse,
    evaluate_policy,
    verify_endorsement,
)
from eovsim.ledger import IdentityRegistry, make_signer
from eovsim.policy import KOF, OR, AND, Principal, PolicyError, evaluate, minimal_satisfying_sets, parse_policy
from eovsim.state import StateStore, Version, WriteSet

ORGS = ("org1", "org2", "org3", "org4", "org5")
PEERS = {o: make_signer(f"peer0.{o}", o, "peer") for o in ORGS}
CLIENT = make_signer("alice", "org1", "client")
REGISTRY = IdentityRegistry([s.identity for s in [*PEERS.values(), CLIENT]])
CCS = ChaincodeRegistry([KVChaincode(), LoopChaincode()])


def sim(state, op="put", args=("a", "1"), nonce=0, cc="kv"):
    p = make_proposal("alice", cc, op, args, nonce)
    try:
        return p, simulate_proposal(state, p, StepBudget(1000), CCS)
    except Exception as exc:
        return p, exc


# -- policy oracle -----------------------------------------------------------------
# Policies as plain nested tuples: "orgN" or ("k", k, [children]); truth over a set of orgs.


def oracle_holds(tree, orgs: set) -> bool:
    if isinstance(tree, str):
        return tree in orgs
    _, k, children = tree
    return sum(oracle_holds(c, orgs) for c in children) >= k


def render(tree) -> str:
    if isinstance(tree, str):
        return tree
    _, k, children = tree
    return f"KOF({k},{','.join(render(c) for c in children)})"


@st.composite
def trees(draw, depth=0):
    if depth >= 2 or draw(st.booleans()):
        return draw(st.sampled_from(ORGS))
    children = draw(st.lists(trees(depth=depth + 1), min_size=1, max_size=4))
    return ("k", draw(st.integers(1, len(children))), children)


def signers_for(orgs):
    return [PEERS[o].identity for o in orgs]


@settings(max_examples=300)
@given(trees())
def test_policy_matches_truth_table_over_all_subsets(tree):
    policy = parse_policy(render(tree))
    dnf = minimal_satisfying_sets(policy)
    for r in range(len(ORGS) + 1):
        for subset in itertools.combinations(ORGS, r):
            expected = oracle_holds(tree, set(subset))
            assert evaluate(policy, signers_for(subset)) == expected
            # Second route: some DNF term is covered by the subset.
            assert any({p.org for p in term} <= set(subset) for term in dnf) == expected


@settings(max_examples=200)
@given(trees(), st.sets(st.sampled_from(ORGS)), st.sets(st.sampled_from(ORGS)))
def test_policy_monotone(tree, base, extra):
    policy = parse_policy(render(tree))
    if evaluate(policy, signers_for(base)):
        assert evaluate(policy, signers_for(base | extra))


# Frozen oracle output: truth table of AND(org1, OR(org2, org3)) over all 8 subsets of {org1, org2, org3}.
AND_OR_TABLE = {
    (): False, ("org1",): False, ("org2",): False, ("org3",): False,
    ("org1", "org2"): True, ("org1", "org3"): True, ("org2", "org3"): False,
    ("org1", "org2", "org3"): True,
}


def test_and_or_truth_table():
    policy = AND(Principal("org1"), OR(Principal("org2"), Principal("org3")))
    assert parse_policy("AND(org1, OR(org2, org3))") == policy
    for subset, want in AND_OR_TABLE.items():
        assert evaluate(policy, signers_for(subset)) is want


def test_two_of_three():
    policy = "KOF(2, org1, org2, org3)"
    p, r = sim(StateStore())
    e1 = endorse(PEERS["org1"], p, r).endorsement
    e3 = endorse(PEERS["org3"], p, r).endorsement
    assert evaluate_policy(policy, [e1, e3], REGISTRY)
    assert not evaluate_policy(policy, [e1], REGISTRY)
    # The same endorser twice still counts once.
    assert not evaluate_policy(policy, [e1, e1], REGISTRY)


def test_principal_forms():
    admin = make_signer("admin.org1", "org1", "admin").identity
    peer = PEERS["org1"].identity
    assert evaluate(parse_policy("org1.admin"), [admin])
    assert not evaluate(parse_policy("org1.admin"), [peer])
    assert evaluate(parse_policy("#peer0.org1"), [peer])
    assert not evaluate(parse_policy("#peer0.org1"), [admin])


@pytest.mark.parametrize("text", ["", "KOF(3, org1, org2)", "AND(org1", "KOF(org1)", "AND(org1))", "#", "OR()"])
def test_policy_syntax_errors(text):
    with pytest.raises(PolicyError):
        parse_policy(text)


def test_policy_roundtrips_through_text():
    p = AND(Principal("org1"), KOF(2, Principal("org2"), Principal("org3"), Principal("org4")))
    assert str(p) == "AND(org1,KOF(2,org2,org3,org4))"
    assert parse_policy(str(p)) == p


# -- ESCC and collection --------------------------------------------------------------


def test_endorsement_signature_verifies_and_tamper_detected():
    p, r = sim(StateStore())
    e = endorse(PEERS["org1"], p, r).endorsement
    assert verify_endorsement(e, REGISTRY)
    forged = replace(e, write_set=WriteSet(((b"kv\x00a", b"2"),)))
    assert not verify_endorsement(forged, REGISTRY)
    assert not verify_endorsement(replace(e, endorser="peer0.org2"), REGISTRY)


def test_identical_states_give_endorsements_differing_only_in_signer():
    p, r = sim(StateStore())
    a = endorse(PEERS["org1"], p, r).endorsement
    b = endorse(PEERS["org2"], p, r).endorsement
    assert a.rwset_digest() == b.rwset_digest()
    assert replace(a, endorser="x", signature=None) == replace(b, endorser="x", signature=None)
    assert a.signature != b.signature


def test_failed_simulation_gives_failure_without_endorsement():
    p, r = sim(StateStore(), op="spin", args=(), cc="loop")
    resp = endorse(PEERS["org1"], p, r)
    assert not resp.ok and resp.endorsement is None and "budget" in resp.reason


def test_collect_two_of_three():
    p, r = sim(StateStore())
    responses = [endorse(PEERS[o], p, r) for o in ORGS[:3]]
    env = collect_endorsements(CLIENT, p, responses, "KOF(2,org1,org2,org3)", REGISTRY)
    assert len(env.endorsements) >= 2
    assert len({e.rwset_digest() for e in env.endorsements}) == 1
    assert env.tx_id == p.tx_id


def test_divergent_state_heights_cause_mismatch():
    s_old, s_new = StateStore(), StateStore()
    s_new.apply_writeset(WriteSet(((b"kv\x00a", b"5"),)), Version(1, 0))
    p, r_old = sim(s_old, op="incr", args=("a", "1"))
    _, r_new = sim(s_new, op="incr", args=("a", "1"))
    responses = [endorse(PEERS["org1"], p, r_old), endorse(PEERS["org2"], p, r_new)]
    with pytest.raises(EndorsementFailure) as exc:
        collect_endorsements(CLIENT, p, responses, "AND(org1,org2)", REGISTRY)
    assert exc.value.reason == "mismatch"


def majority_matching(endorsements):
    """Oracle: the RWSet digest carried by the most endorsements, and those endorsers."""
    groups = {}
    for e in endorsements:
        groups.setdefault(e.rwset_digest(), []).append(e.endorser)
    digest = max(groups, key=lambda d: len(groups[d]))
    return digest, sorted(groups[digest])


@pytest.mark.parametrize("forger_position", [0, 1, 2])
def test_forged_writeset_discarded(forger_position):
    p, r = sim(StateStore())
    forged_sim = replace(r, write_set=WriteSet(((b"kv\x00a", b"999"),)))
    honest = [o for o in ("org1", "org2", "org3")][:2]
    responses = [endorse(PEERS[o], p, r) for o in honest]
    responses.insert(forger_position, endorse(PEERS["org3"], p, forged_sim))
    env = collect_endorsements(CLIENT, p, responses, "KOF(2,org1,org2,org3)", REGISTRY)
    digest, endorsers = majority_matching([x.endorsement for x in responses])
    assert {e.rwset_digest() for e in env.endorsements} == {digest}
    assert sorted(e.endorser for e in env.endorsements) == endorsers == ["peer0.org1", "peer0.org2"]


def test_bad_signature_is_not_counted():
    p, r = sim(StateStore())
    good = endorse(PEERS["org1"], p, r)
    bad = endorse(PEERS["org2"], p, r)
    bad = replace(bad, endorsement=replace(bad.endorsement, signature=good.endorsement.signature))
    with pytest.raises(EndorsementFailure) as exc:
        collect_endorsements(CLIENT, p, [good, bad], "AND(org1,org2)", REGISTRY)
    assert exc.value.reason == "insufficient"


def test_collection_timeout():
    p, r = sim(StateStore())
    responses = [(0, endorse(PEERS["org1"], p, r)), (9, endorse(PEERS["org2"], p, r))]
    with pytest.raises(EndorsementFailure) as exc:
        collect_endorsements(CLIENT, p, responses, "AND(org1,org2)", REGISTRY, timeout=5)
    assert exc.value.reason == "timeout"
    env = collect_endorsements(CLIENT, p, responses, "AND(org1,org2)", REGISTRY, timeout=10)
    assert len(env.endorsements) == 2


def test_all_rejections_reported():
    p, r = sim(StateStore(), op="spin", args=(), cc="loop")
    with pytest.raises(EndorsementFailure) as exc:
        collect_endorsements(CLIENT, p, [endorse(PEERS["org1"], p, r)], "org1", REGISTRY)
    assert exc.value.reason == "rejected"


@settings(max_examples=60)
@given(st.lists(st.tuples(st.sampled_from(ORGS), st.booleans()), min_size=1, max_size=8))
def test_envelope_never_mixes_rwsets(plan):
    p, r = sim(StateStore())
    forged_sim = replace(r, write_set=WriteSet(((b"kv\x00a", b"x"),)))
    responses = [endorse(PEERS[o], p, forged_sim if forge else r) for o, forge in plan]
    try:
        env = collect_endorsements(CLIENT, p, responses, "KOF(2,org1,org2,org3,org4,org5)", REGISTRY)
    except EndorsementFailure:
        return
    assert len({e.rwset_digest() for e in env.endorsements}) == 1
    assert len({e.endorser for e in env.endorsements}) == len(env.endorsements)
