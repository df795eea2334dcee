"""Deterministic, step-budgeted chaincode simulation.

Chaincodes are native Python objects registered per peer. A simulation runs a
proposal against the peer's committed state and yields a read set, a write
set and a response; nothing is persisted.

Reads always observe committed state, even after a put of the same key in the
same simulation (read-your-own-writes is off). This keeps every read-set
entry an exact ``(key, committed version)`` pair, which is what validation
checks later.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from .codec import encode
from .ledger import derive_tx_id
from .state import HistoryEntry, ReadSet, StateStore, Version, WriteSet

NS_SEP = b"\x00"
DEFAULT_MAX_DEPTH = 8


class SimulationError(Exception):
    reason = "runtime-error"


class BudgetExhausted(SimulationError):
    reason = "budget-exhausted"


class ChaincodeError(SimulationError):
    """Raised by chaincode logic to reject (revert) a proposal."""

    reason = "chaincode-error"


class NamespaceError(SimulationError):
    reason = "namespace-violation"


class AuthorityError(SimulationError):
    reason = "unauthorized-invoke"


class RecursionLimitError(SimulationError):
    reason = "recursion-limit"


class UnknownChaincode(SimulationError):
    reason = "unknown-chaincode"


class MalformedProposal(SimulationError):
    reason = "malformed-proposal"


def namespaced(chaincode_id: str, key: bytes) -> bytes:
    return chaincode_id.encode() + NS_SEP + key


def split_key(full_key: bytes) -> tuple[str, bytes]:
    ns, _, key = full_key.partition(NS_SEP)
    return ns.decode(), key


def contract_address(chaincode_id: str) -> str:
    return f"cc:{chaincode_id}"


def to_bytes(value: Any) -> bytes:
    if value is None:
        return b""
    if isinstance(value, bytes):
        return value
    if isinstance(value, bool):
        return b"true" if value else b"false"
    if isinstance(value, (int, str)):
        return str(value).encode()
    return encode(value)


@dataclass(frozen=True)
class StepBudget:
    max_steps: int = 100_000

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("step budget must be positive")


@dataclass(frozen=True)
class Proposal:
    client: str
    chaincode_id: str
    operation: str
    args: tuple[bytes, ...]
    nonce: int
    tx_id: bytes

    def to_wire(self):
        return (self.client, self.chaincode_id, self.operation, tuple(self.args), self.nonce, self.tx_id)


def make_proposal(client: str, chaincode_id: str, operation: str, args: Sequence[Any], nonce: int) -> Proposal:
    return Proposal(
        client=client,
        chaincode_id=chaincode_id,
        operation=operation,
        args=tuple(to_bytes(a) for a in args),
        nonce=nonce,
        tx_id=derive_tx_id(client, nonce),
    )


@dataclass(frozen=True)
class SimulationResult:
    read_set: ReadSet
    write_set: WriteSet
    response: bytes
    steps_used: int
    events: tuple = ()

    def rwset_wire(self):
        return (self.read_set.to_wire(), self.write_set.to_wire())


class Chaincode:
    """Base class: public operations are methods named ``op_<name>``."""

    chaincode_id: str = ""

    def operations(self) -> list[str]:
        return sorted(name[3:] for name in dir(self) if name.startswith("op_"))

    def has_operation(self, operation: str) -> bool:
        return callable(getattr(self, "op_" + operation, None))

    def invoke(self, ctx: "SimulationContext", operation: str, args: Sequence[bytes]) -> Any:
        handler = getattr(self, "op_" + operation, None)
        if handler is None:
            raise ChaincodeError(f"{self.chaincode_id}: unknown operation {operation!r}")
        return handler(ctx, *args)


class FunctionChaincode(Chaincode):
    def __init__(self, chaincode_id: str, handler: Callable[["SimulationContext", str, Sequence[bytes]], Any]):
        self.chaincode_id = chaincode_id
        self._handler = handler

    def has_operation(self, operation: str) -> bool:
        return True

    def invoke(self, ctx, operation, args):
        return self._handler(ctx, operation, args)


class ChaincodeRegistry:
    def __init__(self, chaincodes: Sequence[Chaincode] = (), grants: Mapping[str, Sequence[str]] | None = None):
        self._chaincodes: dict[str, Chaincode] = {}
        self.grants: dict[str, tuple[str, ...]] = {k: tuple(v) for k, v in (grants or {}).items()}
        for cc in chaincodes:
            self.register(cc)

    def register(self, chaincode: Chaincode) -> None:
        if not chaincode.chaincode_id:
            raise ValueError("chaincode needs an id")
        self._chaincodes[chaincode.chaincode_id] = chaincode

    def get(self, chaincode_id: str) -> Chaincode | None:
        return self._chaincodes.get(chaincode_id)

    def __contains__(self, chaincode_id: str) -> bool:
        return chaincode_id in self._chaincodes

    def ids(self) -> list[str]:
        return sorted(self._chaincodes)

    def may_invoke(self, caller: str, callee: str) -> bool:
        granted = self.grants.get(caller, ())
        return caller == callee or callee in granted or "*" in granted


class _Trace:
    """Read/write/step accounting shared by nested invocations."""

    def __init__(self, budget: StepBudget):
        self.budget = budget
        self.steps = 0
        self.exhausted = False
        self.reads: dict[bytes, Version | None] = {}
        self.writes: dict[bytes, bytes | None] = {}
        self.events: list[tuple] = []
        self.scratch: dict[str, dict] = {}


class SimulationContext:
    def __init__(
        self,
        state: StateStore,
        registry: ChaincodeRegistry,
        trace: _Trace,
        namespace: str,
        caller: str,
        origin: str,
        tx_id: bytes,
        depth: int = 0,
        max_depth: int = DEFAULT_MAX_DEPTH,
        tick: int = 0,
    ):
        self._state = state
        self._registry = registry
        self._trace = trace
        self.namespace = namespace
        self.caller = caller
        self.origin = origin
        self.tx_id = tx_id
        self.depth = depth
        self.max_depth = max_depth
        self.tick = tick

    @property
    def address(self) -> str:
        return contract_address(self.namespace)

    @property
    def scratch(self) -> dict:
        """Per-simulation memory private to this chaincode, shared across nested calls."""
        return self._trace.scratch.setdefault(self.namespace, {})

    @property
    def steps_used(self) -> int:
        return self._trace.steps

    def step(self, n: int = 1) -> None:
        t = self._trace
        t.steps += n
        if t.steps > t.budget.max_steps:
            t.steps = t.budget.max_steps
            t.exhausted = True
            raise BudgetExhausted(f"step budget of {t.budget.max_steps} exhausted")

    def _key(self, key: bytes, namespace: str | None) -> bytes:
        if namespace is not None and namespace != self.namespace:
            raise NamespaceError(
                f"{self.namespace} may not access state of {namespace} directly"
            )
        return namespaced(self.namespace, key)

    def get_state(self, key: bytes, namespace: str | None = None) -> bytes | None:
        self.step()
        full = self._key(key, namespace)
        entry = self._state.get_committed(full)
        self._trace.reads.setdefault(full, self._state.committed_version(full))
        return entry.value if entry is not None else None

    def put_state(self, key: bytes, value: bytes, namespace: str | None = None) -> None:
        self.step()
        if not isinstance(value, bytes):
            raise ChaincodeError("state values must be bytes")
        full = self._key(key, namespace)
        self._trace.writes.pop(full, None)
        self._trace.writes[full] = value

    def del_state(self, key: bytes, namespace: str | None = None) -> None:
        self.step()
        full = self._key(key, namespace)
        self._trace.writes.pop(full, None)
        self._trace.writes[full] = None

    def get_history_for_key(self, key: bytes, namespace: str | None = None) -> list[HistoryEntry]:
        self.step()
        return self._state.get_history_for_key(self._key(key, namespace))

    def emit(self, name: str, *fields: Any) -> None:
        self._trace.events.append((self.namespace, name, tuple(to_bytes(f) for f in fields)))

    def chaincode_exists(self, chaincode_id: str) -> bool:
        return chaincode_id in self._registry

    def chaincode_has_operation(self, chaincode_id: str, operation: str) -> bool:
        cc = self._registry.get(chaincode_id)
        return cc is not None and cc.has_operation(operation)

    def invoke_chaincode(self, callee: str, operation: str, args: Sequence[Any] = ()) -> bytes:
        self.step()
        if not self._registry.may_invoke(self.namespace, callee):
            raise AuthorityError(f"{self.namespace} is not authorized to invoke {callee}")
        if self.depth + 1 > self.max_depth:
            raise RecursionLimitError(f"invocation depth exceeds {self.max_depth}")
        chaincode = self._registry.get(callee)
        if chaincode is None:
            raise UnknownChaincode(callee)
        child = SimulationContext(
            self._state,
            self._registry,
            self._trace,
            namespace=callee,
            caller=self.address,
            origin=self.origin,
            tx_id=self.tx_id,
            depth=self.depth + 1,
            max_depth=self.max_depth,
            tick=self.tick,
        )
        return to_bytes(_run(chaincode, child, operation, [to_bytes(a) for a in args]))


def _run(chaincode: Chaincode, ctx: SimulationContext, operation: str, args: Sequence[bytes]) -> Any:
    try:
        return chaincode.invoke(ctx, operation, args)
    except SimulationError:
        raise
    except Exception as exc:  # chaincode bug: surfaces as a failed simulation
        raise ChaincodeError(f"{chaincode.chaincode_id}.{operation}: {type(exc).__name__}: {exc}") from exc


def state_api(ctx: SimulationContext, op: str, key: bytes, value: bytes | None = None):
    if op == "get":
        return ctx.get_state(key)
    if op == "put":
        return ctx.put_state(key, value)
    if op == "del":
        return ctx.del_state(key)
    if op == "history":
        return ctx.get_history_for_key(key)
    raise ValueError(f"unknown state op {op!r}")


def simulate_proposal(
    state: StateStore,
    proposal: Proposal,
    budget: StepBudget,
    registry: ChaincodeRegistry,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    tick: int = 0,
) -> SimulationResult:
    """Execute ``proposal`` against committed ``state`` without persisting.

    Raises a :class:`SimulationError` subclass when the proposal cannot be
    endorsed (budget exhausted, chaincode rejection, namespace violation...).
    """
    if proposal.tx_id != derive_tx_id(proposal.client, proposal.nonce):
        raise MalformedProposal("tx-id does not match client and nonce")
    chaincode = registry.get(proposal.chaincode_id)
    if chaincode is None:
        raise UnknownChaincode(proposal.chaincode_id)
    trace = _Trace(budget)
    ctx = SimulationContext(
        state,
        registry,
        trace,
        namespace=proposal.chaincode_id,
        caller=proposal.client,
        origin=proposal.client,
        tx_id=proposal.tx_id,
        max_depth=max_depth,
        tick=tick,
    )
    ctx.step()
    response = _run(chaincode, ctx, proposal.operation, proposal.args)
    if trace.exhausted:
        # A chaincode swallowed BudgetExhausted; the budget still wins.
        raise BudgetExhausted(f"step budget of {budget.max_steps} exhausted")
    return SimulationResult(
        read_set=ReadSet(tuple(trace.reads.items())),
        write_set=WriteSet(tuple(trace.writes.items())),
        response=to_bytes(response),
        steps_used=trace.steps,
        events=tuple(trace.events),
    )
