import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eovsim.contracts import HouseRental, TokenChaincode
from eovsim.contracts.rental import QUERY_NOT_SENT
from eovsim.local import LocalChannel, make_channel

from oracles import CLIENTS, bal, balances, hand_trace, rental_channel, run_lease, status, token_channel

# -- token standards --------------------------------------------------------------


def test_erc20_transfer_to_hookless_contract_is_credited_and_lost():
    ch = token_channel("erc20")
    assert ch.invoke("alice", "token", "init", ("alice", "100")).valid
    r = ch.invoke("alice", "token", "transfer", ("cc:vault", "30"))
    assert r.valid
    assert bal(ch, "alice") == 70 and bal(ch, "cc:vault") == 30
    assert int(ch.query("alice", "token", "lostOf", ("cc:vault",))) == 30
    assert int(ch.query("alice", "token", "totalLost")) == 30


def test_erc223_rejects_transfer_to_hookless_contract():
    ch = token_channel("erc223")
    ch.invoke("alice", "token", "init", ("alice", "100"))
    r = ch.invoke("alice", "token", "transfer", ("cc:vault", "30"))
    assert r.verdict is None and b"tokenFallback" in r.response
    assert bal(ch, "alice") == 100 and bal(ch, "cc:vault") == 0
    assert int(ch.query("alice", "token", "totalLost")) == 0


def test_erc223_calls_fallback_on_receiving_contract():
    ch = token_channel("erc223")
    ch.invoke("alice", "token", "init", ("alice", "100"))
    r = ch.invoke("alice", "token", "transfer", ("cc:recv", "7"))
    assert r.valid
    assert ch.query("alice", "recv", "received") == b"7"
    assert bal(ch, "cc:recv") == 7


def test_plain_addresses_behave_identically_across_standards():
    hashes = []
    for std in ("erc20", "erc223"):
        ch = token_channel(std)
        ch.invoke("alice", "token", "init", ("alice", "100"))
        ch.invoke("alice", "token", "transfer", ("bob", "40"))
        ch.invoke("bob", "token", "transfer", ("carol", "15"))
        hashes.append(ch.state_hash())
        assert [bal(ch, c) for c in CLIENTS] == [60, 25, 15]
    assert hashes[0] == hashes[1]


def test_allowance_ceiling():
    ch = token_channel()
    ch.invoke("alice", "token", "init", ("alice", "100"))
    assert ch.invoke("alice", "token", "approve", ("bob", "50")).valid
    over = ch.invoke("bob", "token", "transferFrom", ("alice", "carol", "60"))
    assert over.verdict is None and b"allowance exceeded" in over.response
    assert ch.invoke("bob", "token", "transferFrom", ("alice", "carol", "50")).valid
    assert int(ch.query("alice", "token", "allowance", ("alice", "bob"))) == 0
    assert ch.invoke("bob", "token", "transferFrom", ("alice", "carol", "1")).verdict is None
    assert [bal(ch, c) for c in CLIENTS] == [50, 0, 50]


def test_insufficient_balance_and_double_init_rejected():
    ch = token_channel()
    ch.invoke("alice", "token", "init", ("alice", "10"))
    assert ch.invoke("alice", "token", "transfer", ("bob", "11")).verdict is None
    assert ch.invoke("bob", "token", "init", ("bob", "10")).verdict is None
    assert ch.invoke("alice", "token", "transfer", ("bob", "-1")).verdict is None


def test_erc20_has_no_send():
    ch = token_channel("erc20")
    ch.invoke("alice", "token", "init", ("alice", "10"))
    assert ch.invoke("alice", "token", "send", ("bob", "1")).verdict is None


# -- interface registry and ERC777 ---------------------------------------------------


def test_registry_register_lookup_and_manager():
    ch = token_channel()
    assert ch.query("bob", "registry", "lookup", ("bob", "tokensReceived")) == b""
    assert ch.invoke("bob", "registry", "register", ("bob", "tokensReceived", "cc:recv")).valid
    assert ch.query("alice", "registry", "lookup", ("bob", "tokensReceived")) == b"cc:recv"
    # Only the address itself, or its manager, may register for it.
    assert ch.invoke("alice", "registry", "register", ("bob", "tokensReceived", "cc:vault")).verdict is None
    assert ch.invoke("bob", "registry", "setManager", ("bob", "carol")).valid
    assert ch.invoke("bob", "registry", "register", ("bob", "x", "cc:recv")).verdict is None
    assert ch.invoke("carol", "registry", "register", ("bob", "tokensReceived", "")).valid
    assert ch.query("alice", "registry", "lookup", ("bob", "tokensReceived")) == b""


def test_erc777_strict_receive_rejects_unregistered():
    ch = token_channel("erc777", strict_receive=True)
    ch.invoke("alice", "token", "init", ("alice", "100"))
    r = ch.invoke("alice", "token", "send", ("bob", "10"))
    assert r.verdict is None and b"tokensReceived" in r.response
    assert bal(ch, "bob") == 0


def test_erc777_lenient_receive_credits_and_tracks_lost_contracts():
    ch = token_channel("erc777", strict_receive=False)
    ch.invoke("alice", "token", "init", ("alice", "100"))
    assert ch.invoke("alice", "token", "send", ("bob", "10")).valid
    assert ch.invoke("alice", "token", "send", ("cc:vault", "5")).valid
    assert bal(ch, "bob") == 10
    assert int(ch.query("alice", "token", "lostOf", ("cc:vault",))) == 5


def test_erc777_hook_runs_for_registered_recipient():
    ch = token_channel("erc777")
    ch.invoke("alice", "token", "init", ("alice", "100"))
    ch.invoke("bob", "registry", "register", ("bob", "tokensReceived", "cc:recv"))
    r = ch.invoke("alice", "token", "send", ("bob", "12"))
    assert r.valid
    assert bal(ch, "bob") == 12
    assert ch.query("alice", "recv", "received") == b"12"
    assert ("recv", "tokensReceived", (b"alice", b"alice", b"bob", b"12")) in r.events


def test_erc777_operators():
    ch = token_channel("erc777", strict_receive=False)
    ch.invoke("alice", "token", "init", ("alice", "100"))
    assert ch.invoke("bob", "token", "operatorSend", ("alice", "bob", "5")).verdict is None
    assert ch.invoke("alice", "token", "authorizeOperator", ("bob",)).valid
    assert ch.query("x", "token", "isOperatorFor", ("bob", "alice")) == b"true"
    assert ch.invoke("bob", "token", "operatorSend", ("alice", "carol", "5")).valid
    assert ch.invoke("alice", "token", "revokeOperator", ("bob",)).valid
    assert ch.invoke("bob", "token", "operatorSend", ("alice", "carol", "5")).verdict is None
    assert ch.invoke("alice", "token", "authorizeOperator", ("alice",)).verdict is None
    assert bal(ch, "carol") == 5


OPS = st.lists(
    st.tuples(
        st.sampled_from(["transfer", "approve", "transferFrom"]),
        st.sampled_from(CLIENTS),
        st.sampled_from(CLIENTS + ("cc:vault", "cc:recv")),
        st.sampled_from(CLIENTS),
        st.integers(0, 60),
    ),
    max_size=12,
)


@settings(max_examples=25)
@given(std=st.sampled_from(["erc20", "erc223"]), ops=OPS)
def test_supply_conserved(std, ops):
    ch = token_channel(std)
    ch.invoke("alice", "token", "init", ("alice", "100"))
    for op, caller, to, owner, value in ops:
        if op == "transfer":
            ch.invoke(caller, "token", "transfer", (to, str(value)))
        elif op == "approve":
            ch.invoke(caller, "token", "approve", (owner, str(value)))
        else:
            ch.invoke(caller, "token", "transferFrom", (owner, to, str(value)))
    supply = int(ch.query("alice", "token", "totalSupply"))
    people = sum(bal(ch, c) for c in CLIENTS)
    lost = int(ch.query("alice", "token", "totalLost"))
    # Tokens held by hookless contracts are exactly the lost ones.
    assert bal(ch, "cc:vault") == lost
    assert people + bal(ch, "cc:recv") + lost == supply == 100
    if std == "erc223":
        assert lost == 0


# -- house rental ------------------------------------------------------------------


@pytest.mark.parametrize("breached", [False, True])
def test_lease_matches_hand_trace(breached):
    ch = rental_channel()
    assert run_lease(ch, breached) == hand_trace(breached)


def test_rents_paid_log_and_getters():
    ch = rental_channel()
    ch.invoke("landlord", "rental", "deploy", ("3", "1 Main", "12"))
    ch.invoke("landlord", "rental", "setLateFee", ("1",))
    ch.invoke("tenant", "rental", "beginLease", ("1",))
    for _ in range(3):
        assert ch.invoke("tenant", "rental", "payRent", ("4",)).valid
    assert json.loads(ch.query("x", "rental", "getRentsPaid")) == [[1, 4], [2, 4], [3, 4]]
    assert ch.query("x", "rental", "getTenant") == b"tenant"
    assert ch.query("x", "rental", "getHouse") == b"1 Main"
    assert ch.query("x", "rental", "getTermLength") == b"12"
    assert ch.query("x", "rental", "getLateFee") == b"1"
    assert ch.query("x", "rental", "getTermsBreached") == b"false"


def test_guards_reject_without_side_effects():
    ch = rental_channel()
    ch.invoke("landlord", "rental", "deploy", ("2", "h", "12"))
    before = ch.state_hash()
    rejected = [
        ("landlord", "beginLease", ("1",)),  # landlord cannot be tenant
        ("tenant", "beginLease", ("2",)),  # wrong deposit
        ("tenant", "payRent", ("2",)),  # not yet the tenant
        ("landlord", "terminateContract", ("0",)),  # not active
        ("mallory", "oracleCallback", ("q", "true")),  # not the oracle
        ("tenant", "setLateFee", ("5",)),  # onlyLandlord
        ("landlord", "deploy", ("2", "h", "12")),  # already deployed
    ]
    for caller, op, args in rejected:
        assert ch.invoke(caller, "rental", op, args).verdict is None, op
    assert ch.state_hash() == before
    assert ch.invoke("tenant", "rental", "beginLease", ("1",)).valid
    active = ch.state_hash()
    for caller, op, args in [
        ("mallory", "payRent", ("2",)),  # onlyTenant
        ("tenant", "payRent", ("3",)),  # wrong amount
        ("mallory", "beginLease", ("1",)),  # already active
        ("tenant", "terminateContract", ("0",)),  # onlyLandlord
        ("landlord", "setLateFee", ("1",)),  # fixed once active
    ]:
        assert ch.invoke(caller, "rental", op, args).verdict is None, op
    assert ch.state_hash() == active


def test_deposit_refunded_once_then_contract_destroyed():
    ch = rental_channel()
    ch.invoke("landlord", "rental", "deploy", ("2", "h", "12"))
    ch.invoke("tenant", "rental", "beginLease", ("1",))
    assert ch.invoke("landlord", "rental", "terminateContract", ("1",)).valid
    after = balances(ch)
    r = ch.invoke("landlord", "rental", "terminateContract", ("1",))
    assert r.verdict is None and b"contract destroyed" in r.response
    assert ch.invoke("tenant", "rental", "payRent", ("2",)).verdict is None
    with pytest.raises(Exception, match="contract destroyed"):
        ch.query("x", "rental", "getStatus")
    assert balances(ch) == after == [900, 100, 0]


def test_breach_blocks_new_lease():
    ch = rental_channel()
    ch.invoke("landlord", "rental", "deploy", ("2", "h", "12"))
    ch.invoke("oracle", "rental", "oracleCallback", ("q", "true"))
    assert ch.invoke("tenant", "rental", "beginLease", ("1",)).verdict is None


def test_oracle_fee_gate():
    setup = make_channel(clients=("landlord", "tenant", "oracle"), invoke_grants={"rental": ["token"]})
    ch = LocalChannel(setup, [TokenChaincode("token"), HouseRental("rental", oracle_fee=5)])
    ch.invoke("landlord", "token", "init", ("landlord", "100"))
    ch.invoke("landlord", "rental", "deploy", ("2", "h", "12"))
    r = ch.invoke("landlord", "rental", "checkTerms", ())
    assert r.response == b""
    assert ("rental", "LogNewOraclizeQuery", (QUERY_NOT_SENT.encode(),)) in r.events
    ch.invoke("landlord", "token", "transfer", ("cc:rental", "5"))
    r = ch.invoke("landlord", "rental", "checkTerms", ())
    assert r.valid and r.response
    assert int(ch.query("x", "token", "balanceOf", ("oracle",))) == 5
