"""Surface syntax and typechecker for spending-condition contracts.

Grammar::

    contract  := "contract" NAME "(" params ")" "{" clause+ "}"
    params    := [NAME ":" type ("," NAME ":" type)*]
    type      := NAME | HASHFN "(" type ")"
    clause    := "clause" NAME "(" params ")" "{" ("verify" expr)* "unlock" NAME "}"
    expr      := term (("==" | "!=") term)?
    term      := NUMBER | NUMBER "s" | HEX | "true" | "false" | NAME
               | NAME "(" [expr ("," expr)*] ")" | "[" [expr ("," expr)*] "]" | "(" expr ")"

``//`` starts a comment. A numeric literal used where a Time is expected is
a block height below 500,000,000 and a timestamp otherwise; ``<n>s`` is a
Duration in seconds, a bare number where a Duration is expected counts blocks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .types import (
    BASE_TYPES,
    HASH_TYPES,
    MAX_HASH_NESTING,
    SEQUENCE_GRANULARITY,
    DurationValue,
    HashType,
    ListType,
    TimeValue,
    Type,
    hash_depth,
    is_hashable,
    number_in_range,
)


@dataclass
class Diagnostic:
    message: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class ScriptError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


# -- AST ------------------------------------------------------------------------


@dataclass
class Node:
    line: int
    col: int


@dataclass
class Param(Node):
    name: str
    type: Type


@dataclass
class Expr(Node):
    ty: Any = field(default=None, init=False)


@dataclass
class Var(Expr):
    name: str


@dataclass
class NumLit(Expr):
    value: int
    coerced: Any = field(default=None, init=False)  # TimeValue / DurationValue in that position


@dataclass
class SecondsLit(Expr):
    value: int


@dataclass
class BytesLit(Expr):
    value: bytes


@dataclass
class BoolLit(Expr):
    value: bool


@dataclass
class ListLit(Expr):
    items: list[Expr]


@dataclass
class Call(Expr):
    fn: str
    args: list[Expr]


@dataclass
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass
class Verify(Node):
    expr: Expr


@dataclass
class Unlock(Node):
    name: str


@dataclass
class Clause(Node):
    name: str
    params: list[Param]
    verifies: list[Verify]
    unlock: Unlock | None


@dataclass
class Contract(Node):
    name: str
    params: list[Param]
    clauses: list[Clause]

    def clause(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(f"no clause {name!r} in {self.name}")

    def clause_index(self, name: str) -> int:
        return [c.name for c in self.clauses].index(name)

    @property
    def value_param(self) -> Param:
        return next(p for p in self.params if p.type == "Value")


# -- tokenizer ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|//[^\n]*)
  | (?P<nl>\n)
  | (?P<hex>0x[0-9a-fA-F]*)
  | (?P<secs>-?[0-9]+s\b)
  | (?P<num>-?[0-9]+)
  | (?P<op>==|!=)
  | (?P<punct>[(){}\[\],:])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    tokens, pos, line, line_start = [], 0, 1, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        col = pos - line_start + 1
        if not m:
            raise ScriptError([Diagnostic(f"unexpected character {source[pos]!r}", line, col)])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def fail(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        raise ScriptError([Diagnostic(msg, t.line, t.col)])

    def take(self, text: str | None = None, kind: str | None = None) -> Token:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = text or kind
            self.fail(f"expected {want!r}, found {t.text or 'end of input'!r}")
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "op", "name")

    def contract(self) -> Contract:
        start = self.take("contract")
        name = self.take(kind="name")
        params = self.params()
        self.take("{")
        clauses = []
        while self.at("clause"):
            clauses.append(self.clause())
        self.take("}")
        self.take(kind="eof")
        return Contract(start.line, start.col, name.text, params, clauses)

    def params(self) -> list[Param]:
        self.take("(")
        out = []
        if not self.at(")"):
            while True:
                n = self.take(kind="name")
                self.take(":")
                out.append(Param(n.line, n.col, n.text, self.type()))
                if not self.at(","):
                    break
                self.take(",")
        self.take(")")
        return out

    def type(self) -> Type:
        t = self.take(kind="name")
        if t.text in HASH_TYPES:
            self.take("(")
            inner = self.type()
            self.take(")")
            return HashType(t.text, inner)
        if t.text not in BASE_TYPES:
            self.fail(f"unknown type {t.text!r}", t)
        return t.text

    def clause(self) -> Clause:
        start = self.take("clause")
        name = self.take(kind="name")
        params = self.params()
        self.take("{")
        verifies: list[Verify] = []
        unlock = None
        while not self.at("}"):
            if unlock is not None:
                self.fail("unlock must be the last statement of a clause")
            if self.at("verify"):
                v = self.take("verify")
                verifies.append(Verify(v.line, v.col, self.expr()))
            elif self.at("unlock"):
                u = self.take("unlock")
                unlock = Unlock(u.line, u.col, self.take(kind="name").text)
            else:
                self.fail(f"expected 'verify' or 'unlock', found {self.tok.text or 'end of input'!r}")
        self.take("}")
        return Clause(start.line, start.col, name.text, params, verifies, unlock)

    def expr(self) -> Expr:
        left = self.term()
        if self.tok.kind == "op":
            op = self.take(kind="op")
            right = self.term()
            return BinOp(op.line, op.col, op.text, left, right)
        return left

    def term(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return NumLit(t.line, t.col, int(t.text))
        if t.kind == "secs":
            self.i += 1
            return SecondsLit(t.line, t.col, int(t.text[:-1]))
        if t.kind == "hex":
            self.i += 1
            digits = t.text[2:]
            if len(digits) % 2:
                self.fail("hex literal needs an even number of digits", t)
            return BytesLit(t.line, t.col, bytes.fromhex(digits))
        if t.text == "[":
            self.i += 1
            return ListLit(t.line, t.col, self.items("]"))
        if t.text == "(":
            self.i += 1
            e = self.expr()
            self.take(")")
            return e
        if t.kind == "name":
            self.i += 1
            if t.text in ("true", "false"):
                return BoolLit(t.line, t.col, t.text == "true")
            if self.at("("):
                self.i += 1
                return Call(t.line, t.col, t.text, self.items(")"))
            return Var(t.line, t.col, t.text)
        self.fail(f"unexpected {t.text or 'end of input'!r}")

    def items(self, close: str) -> list[Expr]:
        out = []
        if not self.at(close):
            while True:
                out.append(self.expr())
                if not self.at(","):
                    break
                self.take(",")
        self.take(close)
        return out


def parse(source: str) -> Contract:
    return _Parser(source).contract()


# -- typechecker ------------------------------------------------------------------

BUILTINS = ("checkSig", "checkMultiSig", "after", "older", "sha256", "sha1", "ripemd160", "bytes", "size")
_HASH_FN = {"sha256": "Sha256", "sha1": "Sha1", "ripemd160": "Ripemd160"}


class _Checker:
    def __init__(self, contract: Contract):
        self.c = contract
        self.diags: list[Diagnostic] = []
        self.env: dict[str, Type] = {}

    def err(self, node: Node, msg: str) -> None:
        self.diags.append(Diagnostic(msg, node.line, node.col))

    def run(self) -> None:
        c = self.c
        values = [p for p in c.params if p.type == "Value"]
        if len(values) != 1:
            self.err(c, f"contract needs exactly one Value parameter, found {len(values)}")
        if not c.clauses:
            self.err(c, "contract needs at least one clause")
        seen = set()
        for p in c.params:
            self.check_param(p, seen)
        names = set()
        for cl in c.clauses:
            if cl.name in names:
                self.err(cl, f"duplicate clause {cl.name!r}")
            names.add(cl.name)
            self.clause(cl, set(seen))

    def check_param(self, p: Param, seen: set) -> None:
        if p.name in seen or p.name in BUILTINS:
            self.err(p, f"parameter {p.name!r} is already defined")
        seen.add(p.name)
        if hash_depth(p.type) > MAX_HASH_NESTING:
            self.err(p, f"hash types nest at most {MAX_HASH_NESTING} deep")
        if isinstance(p.type, HashType) and not self._hashable_chain(p.type):
            self.err(p, f"{p.type} wraps a type that cannot be hashed")

    def _hashable_chain(self, t: Type) -> bool:
        while isinstance(t, HashType):
            t = t.inner
        return t in ("Bytes", "PublicKey")

    def clause(self, cl: Clause, seen: set) -> None:
        self.env = {p.name: p.type for p in self.c.params}
        for p in cl.params:
            self.check_param(p, seen)
            if p.type == "Value":
                self.err(p, "clause arguments cannot be Values")
            self.env[p.name] = p.type
        for v in cl.verifies:
            t = self.expr(v.expr)
            if t is not None and t != "Boolean":
                self.err(v, f"verify needs a Boolean, got {t}")
        if cl.unlock is None:
            self.err(cl, f"clause {cl.name!r} does not end with unlock")
        elif self.env.get(cl.unlock.name) != "Value":
            self.err(cl.unlock, f"unlock needs the contract's Value parameter, got {cl.unlock.name!r}")

    def expr(self, e: Expr, expected: Type | None = None) -> Type | None:
        t = self._expr(e, expected)
        e.ty = t
        return t

    def _expr(self, e: Expr, expected: Type | None) -> Type | None:
        if isinstance(e, NumLit):
            if not number_in_range(e.value):
                self.err(e, f"Number literal {e.value} outside [-2147483647, 2147483647]")
                return None
            if expected == "Time":
                if e.value < 0:
                    self.err(e, "Time cannot be negative")
                    return None
                e.coerced = TimeValue(e.value)
                return "Time"
            if expected == "Duration":
                if e.value < 0:
                    self.err(e, "Duration cannot be negative")
                    return None
                e.coerced = DurationValue(e.value, "blocks")
                return "Duration"
            return "Number"
        if isinstance(e, SecondsLit):
            if e.value < 0 or e.value % SEQUENCE_GRANULARITY:
                self.err(e, f"Duration in seconds must be a non-negative multiple of {SEQUENCE_GRANULARITY}")
                return None
            return "Duration"
        if isinstance(e, BytesLit):
            return "Bytes"
        if isinstance(e, BoolLit):
            return "Boolean"
        if isinstance(e, Var):
            t = self.env.get(e.name)
            if t is None:
                self.err(e, f"unknown variable {e.name!r}")
                return None
            if t == "Value":
                self.err(e, "a Value can only be unlocked")
                return None
            return t
        if isinstance(e, ListLit):
            self.err(e, "list literals are only allowed as checkMultiSig arguments")
            return None
        if isinstance(e, BinOp):
            lt = self.expr(e.left)
            rt = self.expr(e.right)
            if lt is None or rt is None:
                return None
            if lt != rt:
                self.err(e, f"{e.op} compares {lt} with {rt}")
                return None
            if lt == "Boolean":
                self.err(e, f"{e.op} cannot compare Booleans")
                return None
            return "Boolean"
        if isinstance(e, Call):
            return self.call(e)
        self.err(e, "unsupported expression")
        return None

    def arity(self, e: Call, n: int) -> bool:
        if len(e.args) != n:
            self.err(e, f"{e.fn} takes {n} argument(s), got {len(e.args)}")
            return False
        return True

    def call(self, e: Call) -> Type | None:
        fn = e.fn
        if fn not in BUILTINS:
            self.err(e, f"unknown function {fn!r}")
            return None
        if fn == "checkMultiSig":
            if not self.arity(e, 2):
                return None
            ok = True
            for arg, want in zip(e.args, ("PublicKey", "Signature")):
                if not isinstance(arg, ListLit):
                    self.err(arg, "checkMultiSig takes list literals")
                    ok = False
                    continue
                for item in arg.items:
                    t = self.expr(item)
                    if t is not None and t != want:
                        self.err(item, f"expected {want}, got {t}")
                        ok = False
                arg.ty = ListType(want)
            return "Boolean" if ok else None
        if fn == "checkSig":
            if not self.arity(e, 2):
                return None
            oks = [self._want(a, self.expr(a), w) for a, w in zip(e.args, ("PublicKey", "Signature"))]
            return "Boolean" if all(oks) else None
        if not self.arity(e, 1):
            return None
        arg = e.args[0]
        if fn == "bytes":
            if isinstance(arg, Var) and self.env.get(arg.name) == "Value":
                self.err(arg, "bytes() cannot be called on a Value")
                return None
            t = self.expr(arg)
            if t == "Boolean":
                self.err(arg, "bytes() cannot be called on a Boolean")
                return None
            return "Bytes" if t is not None else None
        if fn == "after":
            t = self.expr(arg, "Time")
            return self._want(arg, t, "Time")
        if fn == "older":
            t = self.expr(arg, "Duration")
            return self._want(arg, t, "Duration")
        if fn == "size":
            t = self.expr(arg)
            return "Number" if self._want(arg, t, "Bytes") else None
        t = self.expr(arg)
        if t is None:
            return None
        if not is_hashable(t):
            self.err(arg, f"{fn}() cannot hash a {t}")
            return None
        out = HashType(_HASH_FN[fn], t)
        if hash_depth(out) > MAX_HASH_NESTING:
            self.err(e, f"hash types nest at most {MAX_HASH_NESTING} deep")
            return None
        return out

    def _want(self, node: Expr, got: Type | None, want: Type) -> Type | None:
        if got is None:
            return None
        if got != want:
            self.err(node, f"expected {want}, got {got}")
            return None
        return "Boolean" if want in ("Time", "Duration") else got


def typecheck(contract: Contract) -> Contract:
    checker = _Checker(contract)
    checker.run()
    if checker.diags:
        raise ScriptError(checker.diags)
    return contract


def parse_and_typecheck(source: str) -> Contract:
    return typecheck(parse(source))
