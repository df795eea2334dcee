"""Fungible token chaincodes: ERC20, ERC223 and a reduced ERC777.

Amounts are non-negative integers encoded as ASCII decimal. Addresses are
client identity ids or ``cc:<chaincode-id>`` for contract accounts. An
address is a contract iff it names a registered chaincode; it "has a token
fallback" iff that chaincode exposes a ``tokenFallback`` operation.

State layout inside the token namespace::

    supply              total minted
    admin               address allowed to mint (set by init)
    bal/<addr>          balance
    allow/<own>/<sp>    remaining allowance of spender over owner
    lost/<addr>         tokens credited to a contract that cannot move them
    lost                running total of lost tokens
    oper/<hold>/<op>    "1" when op is an authorized ERC777 operator
"""

from __future__ import annotations

from ..chaincode import Chaincode, ChaincodeError, SimulationContext

STANDARDS = ("erc20", "erc223", "erc777")


def _amount(raw: bytes) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ChaincodeError(f"not an amount: {raw!r}") from None
    if value < 0:
        raise ChaincodeError("amounts must be non-negative")
    return value


def _addr(raw: bytes) -> str:
    addr = raw.decode() if isinstance(raw, bytes) else str(raw)
    if not addr:
        raise ChaincodeError("empty address")
    return addr


def _contract_id(addr: str) -> str | None:
    return addr[3:] if addr.startswith("cc:") else None


class TokenChaincode(Chaincode):
    def __init__(
        self,
        chaincode_id: str = "token",
        standard: str = "erc20",
        registry_id: str = "registry",
        strict_receive: bool = True,
    ):
        if standard not in STANDARDS:
            raise ValueError(f"unknown token standard {standard!r}")
        self.chaincode_id = chaincode_id
        self.standard = standard
        self.registry_id = registry_id
        # ERC777: reject sends to addresses with no tokensReceived implementer.
        self.strict_receive = strict_receive

    def has_operation(self, operation: str) -> bool:
        allowed = {
            "init", "totalSupply", "balanceOf", "transfer", "transferFrom",
            "approve", "allowance", "lostOf", "totalLost",
        }
        if self.standard == "erc777":
            allowed |= {"send", "authorizeOperator", "revokeOperator", "isOperatorFor", "operatorSend"}
        return operation in allowed

    def invoke(self, ctx, operation, args):
        if not self.has_operation(operation):
            raise ChaincodeError(f"{self.standard} has no method {operation!r}")
        return super().invoke(ctx, operation, args)

    # -- storage helpers ----------------------------------------------------

    # Reads see committed state only, so balances touched twice in one
    # transaction are tracked in the simulation scratchpad.

    def _get_int(self, ctx: SimulationContext, key: bytes) -> int:
        raw = ctx.get_state(key)
        pending = ctx.scratch.get(key)
        if pending is not None:
            return pending
        return int(raw) if raw else 0

    def _put_int(self, ctx: SimulationContext, key: bytes, value: int) -> None:
        ctx.scratch[key] = value
        ctx.put_state(key, str(value).encode())

    def _is_contract(self, ctx: SimulationContext, addr: str) -> bool:
        cc = _contract_id(addr)
        return cc is not None and ctx.chaincode_exists(cc)

    def _move(self, ctx: SimulationContext, src: str, dst: str, value: int) -> None:
        if src == dst:
            if self._get_int(ctx, f"bal/{src}".encode()) < value:
                raise ChaincodeError("insufficient balance")
            return
        src_bal = self._get_int(ctx, f"bal/{src}".encode())
        if src_bal < value:
            raise ChaincodeError("insufficient balance")
        dst_bal = self._get_int(ctx, f"bal/{dst}".encode())
        self._put_int(ctx, f"bal/{src}".encode(), src_bal - value)
        self._put_int(ctx, f"bal/{dst}".encode(), dst_bal + value)
        ctx.emit("Transfer", src, dst, value)

    def _mark_lost(self, ctx: SimulationContext, addr: str, value: int) -> None:
        self._put_int(ctx, f"lost/{addr}".encode(), self._get_int(ctx, f"lost/{addr}".encode()) + value)
        self._put_int(ctx, b"lost", self._get_int(ctx, b"lost") + value)

    def _deliver(self, ctx: SimulationContext, src: str, dst: str, value: int) -> None:
        """Move tokens and apply the standard's contract-recipient rule."""
        self._move(ctx, src, dst, value)
        if not self._is_contract(ctx, dst):
            return
        cc = _contract_id(dst)
        has_fallback = ctx.chaincode_has_operation(cc, "tokenFallback")
        if self.standard == "erc223":
            if not has_fallback:
                raise ChaincodeError(f"erc223: recipient {dst} has no tokenFallback")
            ctx.invoke_chaincode(cc, "tokenFallback", [src, value])
        elif not has_fallback:
            # ERC20 hazard: credited, but the recipient can never move them.
            self._mark_lost(ctx, dst, value)

    # -- ERC20 surface ------------------------------------------------------

    def op_init(self, ctx, holder, amount):
        if ctx.get_state(b"supply") is not None:
            raise ChaincodeError("already initialized")
        value = _amount(amount)
        holder = _addr(holder)
        ctx.put_state(b"admin", ctx.caller.encode())
        self._put_int(ctx, b"supply", value)
        self._put_int(ctx, f"bal/{holder}".encode(), value)
        return value

    def op_totalSupply(self, ctx):
        return self._get_int(ctx, b"supply")

    def op_balanceOf(self, ctx, owner):
        return self._get_int(ctx, f"bal/{_addr(owner)}".encode())

    def op_transfer(self, ctx, to, value):
        self._deliver(ctx, ctx.caller, _addr(to), _amount(value))
        return True

    def op_approve(self, ctx, spender, value):
        spender = _addr(spender)
        self._put_int(ctx, f"allow/{ctx.caller}/{spender}".encode(), _amount(value))
        ctx.emit("Approval", ctx.caller, spender, int(value))
        return True

    def op_allowance(self, ctx, owner, spender):
        return self._get_int(ctx, f"allow/{_addr(owner)}/{_addr(spender)}".encode())

    def op_transferFrom(self, ctx, src, to, value):
        src, to, value = _addr(src), _addr(to), _amount(value)
        key = f"allow/{src}/{ctx.caller}".encode()
        remaining = self._get_int(ctx, key)
        if value > remaining:
            raise ChaincodeError("allowance exceeded")
        self._put_int(ctx, key, remaining - value)
        self._deliver(ctx, src, to, value)
        return True

    def op_lostOf(self, ctx, addr):
        return self._get_int(ctx, f"lost/{_addr(addr)}".encode())

    def op_totalLost(self, ctx):
        return self._get_int(ctx, b"lost")

    # -- ERC777 surface -----------------------------------------------------

    def _send(self, ctx, operator: str, src: str, to: str, value: int) -> None:
        implementer = b""
        if ctx.chaincode_exists(self.registry_id):
            implementer = ctx.invoke_chaincode(self.registry_id, "lookup", [to, "tokensReceived"])
        if not implementer:
            if self.strict_receive:
                raise ChaincodeError(f"erc777: {to} has no tokensReceived implementer")
            self._move(ctx, src, to, value)
            if self._is_contract(ctx, to):
                self._mark_lost(ctx, to, value)
            return
        self._move(ctx, src, to, value)
        hook = _contract_id(implementer.decode())
        if hook is None or not ctx.chaincode_exists(hook):
            raise ChaincodeError(f"erc777: implementer {implementer.decode()} is not a contract")
        ctx.invoke_chaincode(hook, "tokensReceived", [operator, src, to, value])

    def op_send(self, ctx, to, value, data=b""):
        self._send(ctx, ctx.caller, ctx.caller, _addr(to), _amount(value))
        return True

    def op_authorizeOperator(self, ctx, operator):
        operator = _addr(operator)
        if operator == ctx.caller:
            raise ChaincodeError("cannot authorize self as operator")
        ctx.put_state(f"oper/{ctx.caller}/{operator}".encode(), b"1")
        ctx.emit("AuthorizedOperator", operator, ctx.caller)
        return True

    def op_revokeOperator(self, ctx, operator):
        ctx.del_state(f"oper/{ctx.caller}/{_addr(operator)}".encode())
        return True

    def op_isOperatorFor(self, ctx, operator, holder):
        operator, holder = _addr(operator), _addr(holder)
        return operator == holder or ctx.get_state(f"oper/{holder}/{operator}".encode()) == b"1"

    def op_operatorSend(self, ctx, src, to, value, data=b""):
        src = _addr(src)
        if ctx.caller != src and ctx.get_state(f"oper/{src}/{ctx.caller}".encode()) != b"1":
            raise ChaincodeError("caller is not an operator for holder")
        self._send(ctx, ctx.caller, src, _addr(to), _amount(value))
        return True


class ReceiverChaincode(Chaincode):
    """A contract account that accepts tokens (ERC223 fallback and ERC777 hook)."""

    def __init__(self, chaincode_id: str, fallback: bool = True, hook: bool = True):
        self.chaincode_id = chaincode_id
        self._fallback = fallback
        self._hook = hook

    def has_operation(self, operation: str) -> bool:
        if operation == "tokenFallback":
            return self._fallback
        if operation == "tokensReceived":
            return self._hook
        return operation == "received"

    def invoke(self, ctx, operation, args):
        if not self.has_operation(operation):
            raise ChaincodeError(f"{self.chaincode_id}: unknown operation {operation!r}")
        if operation == "received":
            raw = ctx.get_state(b"received")
            return raw or b"0"
        value = int(args[1] if operation == "tokenFallback" else args[3])
        raw = ctx.get_state(b"received")
        ctx.put_state(b"received", str(int(raw or b"0") + value).encode())
        ctx.emit(operation, *args)
        return True


class VaultChaincode(Chaincode):
    """A contract with no token hooks at all: tokens sent here are stuck."""

    def __init__(self, chaincode_id: str = "vault"):
        self.chaincode_id = chaincode_id

    def op_ping(self, ctx):
        return b"pong"
