"""Interface registry: which implementer handles an interface for an address."""

from __future__ import annotations

from ..chaincode import Chaincode, ChaincodeError


class InterfaceRegistry(Chaincode):
    def __init__(self, chaincode_id: str = "registry"):
        self.chaincode_id = chaincode_id

    def _manager(self, ctx, addr: str) -> str:
        raw = ctx.get_state(f"mgr/{addr}".encode())
        return raw.decode() if raw else addr

    def op_setManager(self, ctx, addr, manager):
        addr, manager = addr.decode(), manager.decode()
        if ctx.caller != self._manager(ctx, addr):
            raise ChaincodeError("only the address or its manager may delegate")
        ctx.put_state(f"mgr/{addr}".encode(), manager.encode())
        return True

    def op_register(self, ctx, addr, interface, implementer):
        addr = addr.decode()
        if ctx.caller != self._manager(ctx, addr):
            raise ChaincodeError(f"{ctx.caller} may not register interfaces for {addr}")
        key = f"impl/{addr}/{interface.decode()}".encode()
        if implementer:
            ctx.put_state(key, implementer)
        else:
            ctx.del_state(key)
        ctx.emit("InterfaceImplementerSet", addr, interface, implementer)
        return True

    def op_lookup(self, ctx, addr, interface):
        return ctx.get_state(f"impl/{addr.decode()}/{interface.decode()}".encode()) or b""
