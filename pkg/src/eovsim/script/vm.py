"""Stack machine for compiled spending conditions.

Straight-line code with structured ``IF/ELSE/ENDIF`` only, so a run takes at
most one step per opcode. The witness is the clause arguments followed by
the clause index, which ends up on top of the stack.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Sequence

from Crypto.Hash import RIPEMD160

from ..codec import DecodeError, decode, encode
from .types import UNLOCKED, DurationValue, ScriptResult, SpendingContext, TimeValue, locked

OPCODES = (
    "PUSH", "PARAM", "PICK", "DROP", "DUP", "EQUAL", "NOT", "SIZE",
    "SHA256", "SHA1", "RIPEMD160", "CHECKSIG", "CHECKMULTISIG",
    "CHECKLOCKTIME", "CHECKSEQUENCE", "VERIFY", "IF", "ELSE", "ENDIF",
)
MAX_STACK = 1000


class Malformed(Exception):
    pass


def _const_wire(v: Any):
    if isinstance(v, TimeValue):
        return ("time", v.n)
    if isinstance(v, DurationValue):
        return ("dur", v.unit, v.n)
    if isinstance(v, (bool, int, bytes)):
        return ("lit", v)
    raise TypeError(f"cannot serialise constant {v!r}")


def _const_from_wire(w) -> Any:
    tag = w[0]
    if tag == "time":
        return TimeValue(w[1])
    if tag == "dur":
        return DurationValue(w[2], w[1])
    if tag == "lit":
        return w[1]
    raise DecodeError(f"unknown constant tag {tag!r}")


@dataclass(frozen=True)
class Program:
    ops: tuple[tuple[str, Any], ...]

    def __len__(self) -> int:
        return len(self.ops)

    def bind(self, params: Sequence[Any]) -> "Program":
        """Replace ``PARAM i`` with pushes of the instantiated contract's values."""
        out = []
        for op, arg in self.ops:
            if op == "PARAM":
                out.append(("PUSH", params[arg]))
            else:
                out.append((op, arg))
        return Program(tuple(out))

    def to_hex(self) -> str:
        wire = tuple(
            (op, _const_wire(arg) if op == "PUSH" else arg) for op, arg in self.ops
        )
        return encode(wire).hex()

    @classmethod
    def from_hex(cls, text: str) -> "Program":
        ops = []
        for op, arg in decode(bytes.fromhex(text.strip())):
            if op not in OPCODES:
                raise DecodeError(f"unknown opcode {op!r}")
            ops.append((op, _const_from_wire(arg) if op == "PUSH" else arg))
        return cls(tuple(ops))

    def disassemble(self) -> str:
        parts = []
        for op, arg in self.ops:
            if arg is None:
                parts.append(op)
            elif isinstance(arg, bytes):
                parts.append(f"{op} 0x{arg.hex()}")
            else:
                parts.append(f"{op} {arg!r}")
        return "\n".join(parts)


class _Stack(list):
    def pop_item(self):
        if not self:
            raise Malformed("stack underflow")
        return self.pop()

    def push(self, v) -> None:
        if len(self) >= MAX_STACK:
            raise Malformed("stack overflow")
        self.append(v)


def _bytes(v) -> bytes:
    if not isinstance(v, bytes):
        raise Malformed(f"expected bytes on stack, got {type(v).__name__}")
    return v


def _count(v) -> int:
    if type(v) is not int or v < 0:
        raise Malformed("bad item count")
    return v


def _multisig(stack: _Stack, ctx: SpendingContext) -> bool:
    n_sigs = _count(stack.pop_item())
    sigs = [stack.pop_item() for _ in range(n_sigs)][::-1]
    n_keys = _count(stack.pop_item())
    keys = [stack.pop_item() for _ in range(n_keys)][::-1]
    # Walk keys and signatures together; a key that fails is skipped for good.
    ikey = isig = 0
    while isig < n_sigs:
        if n_sigs - isig > n_keys - ikey:
            return False
        if ctx.check_signature(_bytes(keys[ikey]), _bytes(sigs[isig])):
            isig += 1
        ikey += 1
    return True


def run_program(program: Program, witness: Sequence[Any], ctx: SpendingContext) -> ScriptResult:
    """``witness`` is ``(clause_index, *clause_args)``."""
    if not witness:
        return locked("malformed: empty witness")
    stack = _Stack()
    try:
        for item in list(witness[1:]) + [witness[0]]:
            stack.push(item)
        executing: list[bool] = []
        for op, arg in program.ops:
            if op == "IF":
                cond = stack.pop_item() is True if all(executing) else False
                executing.append(cond)
                continue
            if op == "ELSE":
                if not executing:
                    raise Malformed("ELSE without IF")
                executing[-1] = not executing[-1]
                continue
            if op == "ENDIF":
                if not executing:
                    raise Malformed("ENDIF without IF")
                executing.pop()
                continue
            if not all(executing):
                continue
            if op == "PUSH":
                stack.push(arg)
            elif op == "PARAM":
                raise Malformed("unbound contract parameter")
            elif op == "PICK":
                if not 0 <= arg < len(stack):
                    raise Malformed("stack underflow")
                stack.push(stack[-1 - arg])
            elif op == "DROP":
                stack.pop_item()
            elif op == "DUP":
                v = stack.pop_item()
                stack.push(v)
                stack.push(v)
            elif op == "EQUAL":
                b, a = stack.pop_item(), stack.pop_item()
                stack.push(type(a) is type(b) and a == b)
            elif op == "NOT":
                stack.push(stack.pop_item() is not True)
            elif op == "SIZE":
                stack.push(len(_bytes(stack.pop_item())))
            elif op == "SHA256":
                stack.push(hashlib.sha256(_bytes(stack.pop_item())).digest())
            elif op == "SHA1":
                stack.push(hashlib.sha1(_bytes(stack.pop_item())).digest())
            elif op == "RIPEMD160":
                stack.push(RIPEMD160.new(_bytes(stack.pop_item())).digest())
            elif op == "CHECKSIG":
                sig, pk = stack.pop_item(), stack.pop_item()
                stack.push(ctx.check_signature(_bytes(pk), _bytes(sig)))
            elif op == "CHECKMULTISIG":
                stack.push(_multisig(stack, ctx))
            elif op == "CHECKLOCKTIME":
                t = stack.pop_item()
                if not isinstance(t, TimeValue):
                    raise Malformed("CHECKLOCKTIME needs a time")
                # Heights and timestamps occupy disjoint ranges of one field.
                field = ctx.current_height if t.n < 500_000_000 else ctx.current_time
                stack.push(not field < t.n)
            elif op == "CHECKSEQUENCE":
                d = stack.pop_item()
                if not isinstance(d, DurationValue):
                    raise Malformed("CHECKSEQUENCE needs a duration")
                age = ctx.utxo_age_seconds if d.unit == "seconds" else ctx.utxo_age_blocks
                stack.push(not age < d.n)
            elif op == "VERIFY":
                if stack.pop_item() is not True:
                    return locked("verify failed")
            else:
                raise Malformed(f"unknown opcode {op!r}")
        if executing:
            raise Malformed("unterminated IF")
    except Malformed as exc:
        return locked(f"malformed: {exc}")
    if len(stack) == 1 and stack[0] is True:
        return UNLOCKED
    return locked("malformed: final stack is not exactly [true]")
