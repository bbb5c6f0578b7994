"""RDF and datalog value model.

Every IRI, blank node and literal is interned into a dictionary that
assigns dense integer ids, and the engine works on those ids throughout.
The hot types are deliberately plain:

* a fact is a ``(s, p, o)`` tuple of resource ids,
* an atom is a ``(s, p, o)`` tuple whose slots are resource ids or
  variable names (a variable is just a ``str``),
* a substitution is a ``dict`` mapping variable names to resource ids.

Keeping facts hashable tuples makes set membership, indexing and message
payloads cheap; the ``Dictionary`` holds the id to lexical mapping needed
only at the parsing and serialisation boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Union

Term = Union[int, str]
Atom = tuple
Fact = tuple
Substitution = dict

S, P, O = 0, 1, 2
POSITIONS = (S, P, O)
POSITION_NAMES = ("s", "p", "o")

IRI = "iri"
BLANK = "blank"
LITERAL = "literal"


def is_variable(term: Term) -> bool:
    return isinstance(term, str)


def is_ground(atom: Atom) -> bool:
    s, p, o = atom
    return isinstance(s, int) and isinstance(p, int) and isinstance(o, int)


def atom_variables(atom: Atom) -> Iterator[str]:
    """Yield the variable names of an atom, left to right, with repeats."""
    for t in atom:
        if isinstance(t, str):
            yield t


def match_atom(atom: Atom, fact: Fact) -> Optional[Substitution]:
    """Unify an atom with a ground fact.

    Returns the substitution binding the atom's variables, or ``None`` if
    a constant disagrees or a repeated variable would need two values.
    """
    sub: Substitution = {}
    for t, v in zip(atom, fact):
        if isinstance(t, int):
            if t != v:
                return None
        else:
            bound = sub.get(t)
            if bound is None:
                sub[t] = v
            elif bound != v:
                return None
    return sub


def apply_subst(atom: Atom, sub: Substitution) -> Atom:
    """Replace every variable that the substitution binds; others stay."""
    s, p, o = atom
    if isinstance(s, str):
        s = sub.get(s, s)
    if isinstance(p, str):
        p = sub.get(p, p)
    if isinstance(o, str):
        o = sub.get(o, o)
    return (s, p, o)


@dataclass(frozen=True, slots=True)
class Resource:
    """A dictionary entry: dense id plus the surface form it came from."""

    id: int
    kind: str
    lexical: str


class Dictionary:
    """Bidirectional interning of lexical tokens to dense integer ids.

    Tokens keep their surface form: ``<...>`` is an IRI, ``_:name`` a blank
    node, a double quoted token a literal. Anything else is treated as a
    bare IRI, which keeps programmatic use (plain names in tests) easy.
    ``decode(encode(t)) == t`` holds for every token.
    """

    __slots__ = ("_by_token", "_by_id")

    def __init__(self) -> None:
        self._by_token: dict[str, int] = {}
        self._by_id: list[Resource] = []

    def __len__(self) -> int:
        return len(self._by_id)

    @staticmethod
    def kind_of(token: str) -> str:
        if token.startswith("<") and token.endswith(">"):
            return IRI
        if token.startswith("_:"):
            return BLANK
        if token.startswith('"'):
            return LITERAL
        return IRI

    def encode(self, token: str) -> int:
        rid = self._by_token.get(token)
        if rid is None:
            rid = len(self._by_id)
            self._by_token[token] = rid
            self._by_id.append(Resource(rid, self.kind_of(token), token))
        return rid

    def lookup(self, token: str) -> Optional[int]:
        return self._by_token.get(token)

    def decode(self, rid: int) -> str:
        return self._by_id[rid].lexical

    def resource(self, rid: int) -> Resource:
        return self._by_id[rid]

    def render_fact(self, fact: Fact) -> str:
        s, p, o = fact
        return f"{self.decode(s)} {self.decode(p)} {self.decode(o)} ."


@dataclass(frozen=True, slots=True)
class Rule:
    """``head :- body``; the body is a non-empty tuple of atoms."""

    head: Atom
    body: tuple

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("rule body must contain at least one atom")

    def variables(self) -> set[str]:
        out = set(atom_variables(self.head))
        for a in self.body:
            out.update(atom_variables(a))
        return out


def rule_is_safe(rule: Rule) -> bool:
    """Every head variable must occur somewhere in the body."""
    body_vars: set[str] = set()
    for a in rule.body:
        body_vars.update(atom_variables(a))
    return all(v in body_vars for v in atom_variables(rule.head))


@dataclass(frozen=True, slots=True)
class Program:
    rules: tuple

    def __post_init__(self) -> None:
        seen = set()
        for r in self.rules:
            key = (r.head, r.body)
            if key in seen:
                raise ValueError(f"duplicate rule: {r!r}")
            seen.add(key)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def unsafe_rules(self) -> list[Rule]:
        return [r for r in self.rules if not rule_is_safe(r)]
