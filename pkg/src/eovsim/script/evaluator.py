"""Direct evaluation of a typechecked contract against a spending context."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from Crypto.Hash import RIPEMD160

from .parser import BinOp, BoolLit, BytesLit, Call, Contract, Expr, ListLit, NumLit, SecondsLit, Var
from .types import (
    UNLOCKED,
    DurationValue,
    ScriptResult,
    SpendingContext,
    TimeValue,
    conforms,
    locked,
)


class ScriptTypeError(TypeError):
    """Arguments do not match a contract's or clause's signature."""


def ripemd160(data: bytes) -> bytes:
    return RIPEMD160.new(data).digest()


HASHERS = {
    "sha256": lambda b: hashlib.sha256(b).digest(),
    "sha1": lambda b: hashlib.sha1(b).digest(),
    "ripemd160": ripemd160,
}


@dataclass(frozen=True)
class ContractInstance:
    contract: Contract
    args: Mapping[str, Any]


def instantiate(contract: Contract, args: Sequence[Any] | Mapping[str, Any]) -> ContractInstance:
    """Bind contract parameters (the values fixed when coins are locked)."""
    if not isinstance(args, Mapping):
        if len(args) != len(contract.params):
            raise ScriptTypeError(f"{contract.name} takes {len(contract.params)} parameters, got {len(args)}")
        args = {p.name: a for p, a in zip(contract.params, args)}
    for p in contract.params:
        if p.name not in args:
            raise ScriptTypeError(f"missing parameter {p.name!r}")
        if not conforms(args[p.name], p.type):
            raise ScriptTypeError(f"parameter {p.name!r} is not a {p.type}")
    return ContractInstance(contract, dict(args))


def check_multisig_in_order(keys: Sequence[bytes], sigs: Sequence[bytes], ctx: SpendingContext) -> bool:
    """Every signature must match a key, with keys consumed strictly left to right."""
    k = 0
    for sig in sigs:
        while k < len(keys) and not ctx.check_signature(keys[k], sig):
            k += 1
        if k == len(keys):
            return False
        k += 1
    return True


def after(t: TimeValue, ctx: SpendingContext) -> bool:
    now = ctx.current_height if t.kind == "height" else ctx.current_time
    return now >= t.n


def older(d: DurationValue, ctx: SpendingContext) -> bool:
    age = ctx.utxo_age_blocks if d.unit == "blocks" else ctx.utxo_age_seconds
    return age >= d.n


def eval_builtin(name: str, args: Sequence[Any], ctx: SpendingContext) -> Any:
    if name == "checkSig":
        pk, sig = args
        return ctx.check_signature(pk, sig)
    if name == "checkMultiSig":
        keys, sigs = args
        return check_multisig_in_order(keys, sigs, ctx)
    if name == "after":
        (t,) = args
        return after(t, ctx)
    if name == "older":
        (d,) = args
        return older(d, ctx)
    if name in HASHERS:
        (b,) = args
        return HASHERS[name](b)
    if name == "bytes":
        return args[0]
    if name == "size":
        return len(args[0])
    if name == "==":
        return args[0] == args[1]
    if name == "!=":
        return args[0] != args[1]
    raise ScriptTypeError(f"unknown builtin {name!r}")


def _value(e: Expr, env: Mapping[str, Any], ctx: SpendingContext) -> Any:
    if isinstance(e, NumLit):
        return e.coerced if e.coerced is not None else e.value
    if isinstance(e, SecondsLit):
        return DurationValue(e.value, "seconds")
    if isinstance(e, (BytesLit, BoolLit)):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, ListLit):
        return [_value(i, env, ctx) for i in e.items]
    if isinstance(e, BinOp):
        return eval_builtin(e.op, [_value(e.left, env, ctx), _value(e.right, env, ctx)], ctx)
    if isinstance(e, Call):
        return eval_builtin(e.fn, [_value(a, env, ctx) for a in e.args], ctx)
    raise ScriptTypeError(f"cannot evaluate {type(e).__name__}")


def eval_clause(instance: ContractInstance, clause_name: str, clause_args: Sequence[Any], ctx: SpendingContext) -> ScriptResult:
    contract = instance.contract
    clause = contract.clause(clause_name)
    if len(clause_args) != len(clause.params):
        raise ScriptTypeError(f"clause {clause_name!r} takes {len(clause.params)} arguments, got {len(clause_args)}")
    env = dict(instance.args)
    for p, a in zip(clause.params, clause_args):
        if not conforms(a, p.type):
            raise ScriptTypeError(f"argument {p.name!r} is not a {p.type}")
        env[p.name] = a
    for v in clause.verifies:
        if _value(v.expr, env, ctx) is not True:
            return locked(f"verify failed at {v.line}:{v.col}")
    return UNLOCKED
