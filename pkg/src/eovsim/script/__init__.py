"""Spending-condition contracts: parser, typechecker, evaluator, compiler, VM."""

from .compiler import compile_contract
from .corpus import CORPUS, builtin_contract, builtin_contracts
from .evaluator import (
    ContractInstance,
    ScriptTypeError,
    check_multisig_in_order,
    eval_builtin,
    eval_clause,
    instantiate,
)
from .parser import Contract, Diagnostic, ScriptError, parse, parse_and_typecheck, typecheck
from .types import (
    NUMBER_MAX,
    NUMBER_MIN,
    DurationValue,
    ScriptResult,
    SpendingContext,
    TimeValue,
    default_verifier,
)
from .vm import Program, run_program

compile = compile_contract  # noqa: A001

__all__ = [
    "CORPUS",
    "Contract",
    "ContractInstance",
    "Diagnostic",
    "DurationValue",
    "NUMBER_MAX",
    "NUMBER_MIN",
    "Program",
    "ScriptError",
    "ScriptResult",
    "ScriptTypeError",
    "SpendingContext",
    "TimeValue",
    "builtin_contract",
    "builtin_contracts",
    "check_multisig_in_order",
    "compile",
    "compile_contract",
    "default_verifier",
    "eval_builtin",
    "eval_clause",
    "instantiate",
    "parse",
    "parse_and_typecheck",
    "run_program",
    "typecheck",
]
