"""Compile a typechecked contract into a VM program."""

from __future__ import annotations

from .evaluator import ContractInstance
from .parser import BinOp, BoolLit, BytesLit, Call, Clause, Contract, Expr, ListLit, NumLit, SecondsLit, Var
from .types import DurationValue
from .vm import Program

_UNARY = {
    "sha256": "SHA256",
    "sha1": "SHA1",
    "ripemd160": "RIPEMD160",
    "size": "SIZE",
    "after": "CHECKLOCKTIME",
    "older": "CHECKSEQUENCE",
}


class _Emitter:
    def __init__(self, contract: Contract):
        self.params = {p.name: i for i, p in enumerate(contract.params)}
        self.ops: list[tuple[str, object]] = []
        self.height = 0
        self.slots: dict[str, int] = {}

    def emit(self, op: str, arg=None, delta: int = 0) -> None:
        self.ops.append((op, arg))
        self.height += delta

    def expr(self, e: Expr) -> None:
        if isinstance(e, NumLit):
            self.emit("PUSH", e.coerced if e.coerced is not None else e.value, +1)
        elif isinstance(e, SecondsLit):
            self.emit("PUSH", DurationValue(e.value, "seconds"), +1)
        elif isinstance(e, (BytesLit, BoolLit)):
            self.emit("PUSH", e.value, +1)
        elif isinstance(e, Var):
            if e.name in self.slots:
                self.emit("PICK", self.height - 1 - self.slots[e.name], +1)
            else:
                self.emit("PARAM", self.params[e.name], +1)
        elif isinstance(e, BinOp):
            self.expr(e.left)
            self.expr(e.right)
            self.emit("EQUAL", None, -1)
            if e.op == "!=":
                self.emit("NOT")
        elif isinstance(e, Call):
            self.call(e)
        else:
            raise TypeError(f"cannot compile {type(e).__name__}")

    def call(self, e: Call) -> None:
        if e.fn == "bytes":
            self.expr(e.args[0])
        elif e.fn in _UNARY:
            self.expr(e.args[0])
            self.emit(_UNARY[e.fn])
        elif e.fn == "checkSig":
            self.expr(e.args[0])
            self.expr(e.args[1])
            self.emit("CHECKSIG", None, -1)
        elif e.fn == "checkMultiSig":
            keys, sigs = e.args
            assert isinstance(keys, ListLit) and isinstance(sigs, ListLit)
            base = self.height
            for k in keys.items:
                self.expr(k)
            self.emit("PUSH", len(keys.items), +1)
            for s in sigs.items:
                self.expr(s)
            self.emit("PUSH", len(sigs.items), +1)
            self.emit("CHECKMULTISIG")
            self.height = base + 1
        else:
            raise TypeError(f"unknown builtin {e.fn!r}")

    def clause(self, clause: Clause) -> None:
        n = len(clause.params)
        self.slots = {p.name: i for i, p in enumerate(clause.params)}
        self.height = n
        for v in clause.verifies:
            self.expr(v.expr)
            self.emit("VERIFY", None, -1)
        for _ in range(n):
            self.emit("DROP", None, -1)
        self.emit("PUSH", True, +1)


def compile_contract(contract: Contract | ContractInstance) -> Program:
    """Template program for ``contract``; an instance is compiled and bound in one go.

    Layout: ``DUP PUSH i EQUAL IF DROP <clause i> ELSE ... ENDIF`` per clause,
    failing when no index matches.
    """
    instance = contract if isinstance(contract, ContractInstance) else None
    c = instance.contract if instance else contract
    em = _Emitter(c)
    for i, clause in enumerate(c.clauses):
        em.emit("DUP")
        em.emit("PUSH", i)
        em.emit("EQUAL")
        em.emit("IF")
        em.emit("DROP")
        em.clause(clause)
        em.emit("ELSE")
    em.emit("PUSH", False)
    em.emit("VERIFY")
    for _ in c.clauses:
        em.emit("ENDIF")
    program = Program(tuple(em.ops))
    if instance is not None:
        program = program.bind([instance.args[p.name] for p in c.params])
    return program
