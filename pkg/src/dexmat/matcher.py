"""Compiles rules into pivot-annotated queries.

Every body position of a rule yields one query: the atom at that
position (the pivot) is unified against an arriving fact, and the other
atoms are matched afterwards in body order, each carrying a timestamp
comparison. Atoms before the pivot compare strictly (``<``), atoms after
it compare inclusively (``<=``), both against the pivot fact's stamp.
Under this scheme each rule instantiation completes through exactly one
pivot, the earliest body position holding the latest stamp, so no
derivation is produced twice.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .model import Atom, Fact, P, Program, Rule, Substitution, atom_variables, is_variable, match_atom
from .store import LESS, LESS_EQUAL


@dataclass(frozen=True)
class MatchStep:
    body_index: int
    atom: Atom
    comparison: str
    # variables of this atom still needed by later steps or the head
    carry: tuple[str, ...]


@dataclass(frozen=True)
class AnnotatedQuery:
    rule_index: int
    rule: Rule
    pivot: int
    steps: tuple[MatchStep, ...]
    pivot_carry: tuple[str, ...]

    def __str__(self) -> str:
        marks = []
        for j, atom in enumerate(self.rule.body):
            if j == self.pivot:
                marks.append(f"b{j}*")
            else:
                marks.append(f"b{j}{LESS if j < self.pivot else LESS_EQUAL}")
        return f"r{self.rule_index}[{' '.join(marks)}]"


def _carry(atom: Atom, later: list[Atom], head: Atom) -> tuple[str, ...]:
    downstream = set(atom_variables(head))
    for a in later:
        downstream.update(atom_variables(a))
    return tuple(sorted(set(atom_variables(atom)) & downstream))


def compile_rule(rule: Rule, rule_index: int) -> tuple[AnnotatedQuery, ...]:
    queries = []
    n = len(rule.body)
    for pivot in range(n):
        steps = []
        for j in range(n):
            if j == pivot:
                continue
            later = [rule.body[m] for m in range(j + 1, n) if m != pivot]
            steps.append(
                MatchStep(
                    body_index=j,
                    atom=rule.body[j],
                    comparison=LESS if j < pivot else LESS_EQUAL,
                    carry=_carry(rule.body[j], later, rule.head),
                )
            )
        queries.append(
            AnnotatedQuery(
                rule_index=rule_index,
                rule=rule,
                pivot=pivot,
                steps=tuple(steps),
                pivot_carry=_carry(rule.body[pivot], list(rule.body), rule.head),
            )
        )
    return tuple(queries)


class RuleIndex:
    """Looks up the queries whose pivot can unify with a given fact."""

    def __init__(self, program: Program):
        self._by_predicate: dict[int, list[AnnotatedQuery]] = {}
        self._any_predicate: list[AnnotatedQuery] = []
        self._by_key: dict[tuple[int, int], AnnotatedQuery] = {}
        for rule_index, rule in enumerate(program):
            for query in compile_rule(rule, rule_index):
                self._by_key[(rule_index, query.pivot)] = query
                predicate = rule.body[query.pivot][P]
                if is_variable(predicate):
                    self._any_predicate.append(query)
                else:
                    self._by_predicate.setdefault(predicate, []).append(query)

    def query(self, rule_index: int, pivot: int) -> AnnotatedQuery:
        return self._by_key[(rule_index, pivot)]

    def matches(self, fact: Fact) -> Iterator[tuple[AnnotatedQuery, Substitution]]:
        """Yield (query, pivot substitution) pairs in (rule, pivot) order."""
        candidates = self._by_predicate.get(fact[P], []) + self._any_predicate
        candidates.sort(key=lambda q: (q.rule_index, q.pivot))
        for query in candidates:
            sub = match_atom(query.rule.body[query.pivot], fact)
            if sub is not None:
                yield query, sub
