"""Endorsement / access policy trees and their prefix-form grammar.

Grammar::

    policy    := principal | AND(p, ...) | OR(p, ...) | KOF(k, p, ...)
    principal := ORG            any identity whose org is ORG
               | ORG.ROLE       identity in ORG with that role (e.g. org1.admin)
               | #ID            one specific identity

A principal is satisfied when at least one signer matches it. The same signer
may satisfy several principals.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Union


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Principal:
    org: str | None = None
    role: str | None = None
    identity: str | None = None

    def matches(self, signer) -> bool:
        if self.identity is not None:
            return signer.id == self.identity
        if signer.org != self.org:
            return False
        return self.role is None or signer.role == self.role

    def __str__(self) -> str:
        if self.identity is not None:
            return f"#{self.identity}"
        return self.org if self.role is None else f"{self.org}.{self.role}"


@dataclass(frozen=True)
class KOfN:
    k: int
    children: tuple["Policy", ...]

    def __str__(self) -> str:
        inner = ",".join(str(c) for c in self.children)
        n = len(self.children)
        if self.k == n and n > 0:
            return f"AND({inner})"
        if self.k == 1:
            return f"OR({inner})"
        return f"KOF({self.k},{inner})"


Policy = Union[Principal, KOfN]


def AND(*children: Policy) -> KOfN:
    return KOfN(len(children), tuple(children))


def OR(*children: Policy) -> KOfN:
    return KOfN(1, tuple(children))


def KOF(k: int, *children: Policy) -> KOfN:
    return KOfN(k, tuple(children))


_TOKEN = re.compile(r"\s*(?:(\()|(\))|(,)|([#A-Za-z0-9_.\-:]+))")


def _tokenize(text: str) -> list[str]:
    tokens, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolicyError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        tokens.append(m.group(m.lastindex))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


def parse_policy(text: str) -> Policy:
    tokens = _tokenize(text)
    if not tokens:
        raise PolicyError("empty policy")
    pos = 0

    def expect(tok: str) -> None:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            got = tokens[pos] if pos < len(tokens) else "end of input"
            raise PolicyError(f"expected {tok!r}, got {got!r}")
        pos += 1

    def node() -> Policy:
        nonlocal pos
        if pos >= len(tokens):
            raise PolicyError("unexpected end of policy")
        tok = tokens[pos]
        pos += 1
        upper = tok.upper()
        if upper in ("AND", "OR", "KOF") and pos < len(tokens) and tokens[pos] == "(":
            expect("(")
            k = None
            if upper == "KOF":
                if pos >= len(tokens) or not tokens[pos].isdigit():
                    raise PolicyError("KOF needs an integer threshold first")
                k = int(tokens[pos])
                pos += 1
                expect(",")
            children = [node()]
            while pos < len(tokens) and tokens[pos] == ",":
                pos += 1
                children.append(node())
            expect(")")
            if upper == "AND":
                k = len(children)
            elif upper == "OR":
                k = 1
            if not 1 <= k <= len(children):
                raise PolicyError(f"threshold {k} outside 1..{len(children)}")
            return KOfN(k, tuple(children))
        if tok in ("(", ")", ","):
            raise PolicyError(f"unexpected {tok!r}")
        if tok.startswith("#"):
            if len(tok) == 1:
                raise PolicyError("empty identity principal")
            return Principal(identity=tok[1:])
        org, _, role = tok.partition(".")
        return Principal(org=org, role=role or None)

    policy = node()
    if pos != len(tokens):
        raise PolicyError(f"trailing tokens: {tokens[pos:]}")
    return policy


def as_policy(p: Policy | str) -> Policy:
    return parse_policy(p) if isinstance(p, str) else p


def evaluate(policy: Policy, signers: Iterable) -> bool:
    """True iff the set of signer identities satisfies the policy tree."""
    signers = list(signers)
    if isinstance(policy, Principal):
        return any(policy.matches(s) for s in signers)
    need = policy.k
    for child in policy.children:
        if evaluate(child, signers):
            need -= 1
            if need <= 0:
                return True
    return need <= 0


def principals(policy: Policy) -> list[Principal]:
    if isinstance(policy, Principal):
        return [policy]
    out: list[Principal] = []
    for c in policy.children:
        for p in principals(c):
            if p not in out:
                out.append(p)
    return out


def minimal_satisfying_sets(policy: Policy) -> list[frozenset[Principal]]:
    """Expand the tree into the principal sets that satisfy it (DNF)."""
    if isinstance(policy, Principal):
        return [frozenset([policy])]
    child_sets = [minimal_satisfying_sets(c) for c in policy.children]
    result: set[frozenset[Principal]] = set()
    for chosen in itertools.combinations(range(len(child_sets)), policy.k):
        for combo in itertools.product(*(child_sets[i] for i in chosen)):
            result.add(frozenset().union(*combo))
    return sorted(result, key=lambda s: (len(s), sorted(map(str, s))))
