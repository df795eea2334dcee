"""House rental agreement as a chaincode, paid in units of the builtin token.

Payments that Solidity would attach as ``msg.value`` are pulled from the
payer with ``transferFrom``, so payers approve the rental contract address
(``cc:<id>``) on the token first. The external oracle is a registered
identity that answers breach queries through ``oracleCallback``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..chaincode import Chaincode, ChaincodeError, SimulationContext

CREATED, ACTIVE, TERMINATED = "Created", "Active", "Terminated"

QUERY_NOT_SENT = "Oraclize query was NOT sent, please add some ETH to cover for the query fee"
QUERY_SENT = "Oraclize query was sent, standing by for the answer.."


class GuardViolation(ChaincodeError):
    """A failed ``assert``/``require``/modifier; the whole call reverts."""


class HouseRental(Chaincode):
    def __init__(
        self,
        chaincode_id: str = "rental",
        token_id: str = "token",
        oracle: str = "oracle",
        security_deposit: int = 1,
        oracle_fee: int = 0,
    ):
        self.chaincode_id = chaincode_id
        self.token_id = token_id
        self.oracle = oracle
        self.security_deposit = security_deposit
        self.oracle_fee = oracle_fee

    _GETTERS = {
        "getStatus": "status",
        "getLandlord": "landlord",
        "getTenant": "tenant",
        "getHouse": "house",
        "getTimeCreated": "timeCreated",
        "getTermLength": "termLength",
        "getRent": "rent",
        "getSecurityDeposit": "securityDeposit",
        "getLateFee": "lateFee",
        "getTermsBreached": "termsBreached",
    }

    def has_operation(self, operation: str) -> bool:
        return operation in self._GETTERS or super().has_operation(operation)

    def invoke(self, ctx, operation, args):
        if operation == "deploy":
            return self.op_deploy(ctx, *args)
        c = self._load(ctx)
        if c["status"] == TERMINATED:
            raise ChaincodeError("contract destroyed")
        if operation in self._GETTERS:
            value = c[self._GETTERS[operation]]
            return json.dumps(value).encode() if not isinstance(value, str) else value.encode()
        return super().invoke(ctx, operation, args)

    # -- persistence --------------------------------------------------------

    def _load(self, ctx: SimulationContext) -> dict:
        raw = ctx.get_state(b"contract")
        if raw is None:
            raise ChaincodeError("rental not deployed")
        return json.loads(raw)

    def _save(self, ctx: SimulationContext, c: dict) -> None:
        ctx.put_state(b"contract", json.dumps(c, sort_keys=True).encode())

    def _pay(self, ctx: SimulationContext, payer: str, payee: str, value: int) -> None:
        """Pull ``value`` from ``payer`` straight to ``payee`` (msg.value + forward)."""
        if value:
            ctx.invoke_chaincode(self.token_id, "transferFrom", [payer, payee, value])

    def _balance(self, ctx: SimulationContext) -> int:
        return int(ctx.invoke_chaincode(self.token_id, "balanceOf", [ctx.address]))

    @staticmethod
    def _require(cond: bool, what: str) -> None:
        if not cond:
            raise GuardViolation(f"require: {what}")

    # -- lifecycle ------------------------------------------------------------

    def op_deploy(self, ctx, rent, house, term_length):
        if ctx.get_state(b"contract") is not None:
            raise ChaincodeError("already deployed")
        c = {
            "status": CREATED,
            "landlord": ctx.caller,
            "tenant": "",
            "house": house.decode(),
            "rent": int(rent),
            "securityDeposit": self.security_deposit,
            "lateFee": 0,
            "termLength": int(term_length),
            "timeCreated": ctx.tick,
            "termsBreached": False,
            "rentsPaid": [],
            "pendingQuery": "",
        }
        self._save(ctx, c)
        return True

    def op_setLateFee(self, ctx, fee):
        c = self._load(ctx)
        if ctx.caller != c["landlord"]:
            raise GuardViolation("onlyLandlord")
        self._require(c["status"] == CREATED, "late fee fixed once the lease is active")
        c["lateFee"] = int(fee)
        self._save(ctx, c)
        return True

    def op_beginLease(self, ctx, paid):
        c = self._load(ctx)
        if c["termsBreached"]:
            raise GuardViolation("policyBreached")
        paid = int(paid)
        self._require(
            ctx.caller != c["landlord"] and c["status"] == CREATED and paid == c["securityDeposit"],
            "msg.sender != landlord && status == Created && msg.value == securityDeposit",
        )
        c["tenant"] = ctx.caller
        self._pay(ctx, ctx.caller, c["landlord"], paid)
        c["status"] = ACTIVE
        self._save(ctx, c)
        ctx.emit("contractActive")
        return True

    def op_checkTerms(self, ctx):
        c = self._load(ctx)
        if self.oracle_fee > self._balance(ctx):
            ctx.emit("LogNewOraclizeQuery", QUERY_NOT_SENT)
            return b""
        ctx.emit("LogNewOraclizeQuery", QUERY_SENT)
        if self.oracle_fee:
            ctx.invoke_chaincode(self.token_id, "transfer", [self.oracle, self.oracle_fee])
        c["pendingQuery"] = ctx.tx_id.hex()
        self._save(ctx, c)
        return c["pendingQuery"].encode()

    def op_oracleCallback(self, ctx, query_id, result):
        if ctx.caller != self.oracle:
            raise GuardViolation("callback from non-oracle sender")
        c = self._load(ctx)
        c["termsBreached"] = result.strip().lower() in (b"true", b"1")
        c["pendingQuery"] = ""
        self._save(ctx, c)
        return True

    def op_payRent(self, ctx, paid):
        c = self._load(ctx)
        if ctx.caller != c["tenant"]:
            raise GuardViolation("onlyTenant")
        paid = int(paid)
        self._require(c["status"] == ACTIVE, "status == Active")
        self._require(paid == c["rent"] + c["lateFee"], "msg.value == rent + lateFee")
        self._pay(ctx, ctx.caller, c["landlord"], paid)
        c["rentsPaid"].append([len(c["rentsPaid"]) + 1, paid])
        self._save(ctx, c)
        return True

    def op_terminateContract(self, ctx, paid=b"0"):
        c = self._load(ctx)
        if ctx.caller != c["landlord"]:
            raise GuardViolation("onlyLandlord")
        self._require(c["status"] == ACTIVE, "status == Active")
        paid = int(paid)
        self._pay(ctx, ctx.caller, ctx.address, paid)
        if not c["termsBreached"]:
            ctx.invoke_chaincode(self.token_id, "transfer", [c["tenant"], c["securityDeposit"]])
        ctx.emit("contractTerminated")
        # selfdestruct(landlord): sweep what is left, then freeze.
        rest = self._balance(ctx)
        if rest > 0:
            ctx.invoke_chaincode(self.token_id, "transfer", [c["landlord"], rest])
        c["status"] = TERMINATED
        self._save(ctx, c)
        return True

    def op_tokenFallback(self, ctx, *args):
        c = self._load(ctx)
        balance = self._balance(ctx)
        if balance:
            ctx.invoke_chaincode(self.token_id, "transfer", [c["landlord"], balance])
        return True

    def op_getRentsPaid(self, ctx):
        return json.dumps(self._load(ctx)["rentsPaid"]).encode()


@dataclass
class PendingVerdict:
    query_id: str
    due_tick: int
    breached: bool


class RentalOracle:
    """Harness-side oracle: answers each breach query after ``delay`` ticks."""

    def __init__(self, identity: str = "oracle", delay: int = 3, verdict=lambda query_id: False):
        self.identity = identity
        self.delay = delay
        self.verdict = verdict
        self.pending: list[PendingVerdict] = []

    def observe(self, query_id: str, tick: int) -> None:
        if query_id and all(p.query_id != query_id for p in self.pending):
            self.pending.append(PendingVerdict(query_id, tick + self.delay, bool(self.verdict(query_id))))

    def due(self, tick: int) -> list[PendingVerdict]:
        ready = [p for p in self.pending if p.due_tick <= tick]
        self.pending = [p for p in self.pending if p.due_tick > tick]
        return ready
