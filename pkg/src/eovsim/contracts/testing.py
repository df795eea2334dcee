"""Small chaincodes used by experiments and tests."""

from __future__ import annotations

from ..chaincode import Chaincode, ChaincodeError


class KVChaincode(Chaincode):
    """Generic key/value operations over its own namespace."""

    def __init__(self, chaincode_id: str = "kv"):
        self.chaincode_id = chaincode_id

    def op_put(self, ctx, key, value):
        ctx.put_state(key, value)
        return True

    def op_get(self, ctx, key):
        return ctx.get_state(key) or b""

    def op_del(self, ctx, key):
        ctx.del_state(key)
        return True

    def op_incr(self, ctx, key, amount=b"1"):
        raw = ctx.get_state(key)
        value = int(raw or b"0") + int(amount)
        ctx.put_state(key, str(value).encode())
        return value

    def op_move(self, ctx, src, dst, amount):
        """Move ``amount`` from counter ``src`` to counter ``dst``; fails if short."""
        amount = int(amount)
        a = int(ctx.get_state(src) or b"0")
        if a < amount:
            raise ChaincodeError("insufficient")
        b = int(ctx.get_state(dst) or b"0")
        ctx.put_state(src, str(a - amount).encode())
        ctx.put_state(dst, str(b + amount).encode())
        return True

    def op_history(self, ctx, key):
        return b",".join(
            (h.value if h.value is not None else b"<deleted>") for h in ctx.get_history_for_key(key)
        )

    def op_peek(self, ctx, namespace, key):
        return ctx.get_state(key, namespace=namespace.decode()) or b""


class LoopChaincode(Chaincode):
    """``spin`` never terminates on its own; only the step budget stops it."""

    def __init__(self, chaincode_id: str = "loop"):
        self.chaincode_id = chaincode_id

    def op_spin(self, ctx):
        while True:
            ctx.step()

    def op_work(self, ctx, steps):
        for _ in range(int(steps)):
            ctx.step()
        return True


class DepthChaincode(Chaincode):
    """Invokes itself ``n`` times, writing the deepest level reached."""

    def __init__(self, chaincode_id: str = "depth"):
        self.chaincode_id = chaincode_id

    def op_recurse(self, ctx, n):
        n = int(n)
        ctx.put_state(f"level/{ctx.depth}".encode(), b"1")
        if n <= 0:
            return ctx.depth
        return ctx.invoke_chaincode(self.chaincode_id, "recurse", [n - 1])
