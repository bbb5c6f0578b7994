"""Single-machine reference evaluation.

Two fixpoint strategies over the same program, used to judge the
cluster's output. The incremental one mirrors the distributed matching
discipline exactly: facts carry the round they appeared in, and a rule
instantiation is attributed to the earliest body position holding the
newest fact, so every instantiation is counted exactly once. The plain
strategy rematches the whole body against the whole snapshot each round
and counts every instantiation it touches, repeats included; comparing
the two counters shows what the discipline saves.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import count

from .model import Fact, Program, Substitution, apply_subst, is_variable, match_atom


@dataclass(frozen=True)
class OracleResult:
    facts: frozenset[Fact]
    rounds: int
    instantiations: int


def _match_against(atom, facts, substitution):
    pattern = apply_subst(atom, substitution)
    for fact in facts:
        extended = match_atom(pattern, fact)
        if extended is None:
            continue
        merged = dict(substitution)
        merged.update(extended)
        yield fact, merged


def seminaive(program: Program, facts) -> OracleResult:
    """Round-stamped fixpoint with single-counted instantiations."""
    stamp: dict[Fact, int] = {f: 0 for f in facts}
    known: set[Fact] = set(stamp)
    instantiations = 0
    productive_rounds = 0
    for round_no in count(1):
        fresh: set[Fact] = set()
        for rule in program:
            for pivot in range(len(rule.body)):
                for derived in _instantiate(
                    rule.body, pivot, 0, {}, stamp, round_no, rule.head
                ):
                    instantiations += 1
                    if derived not in known:
                        fresh.add(derived)
        if not fresh:
            break
        productive_rounds += 1
        for fact in fresh:
            stamp[fact] = round_no
        known |= fresh
    return OracleResult(frozenset(known), productive_rounds, instantiations)


def _instantiate(body, pivot, index, substitution, stamp, round_no, head):
    """Yield (head instance, body facts) for completed matches.

    The pivot atom must bind a fact from the previous round; positions
    before the pivot only accept older facts, positions after it accept
    anything current. This splits each instantiation's matches into
    exactly one (rule, pivot) bucket.
    """
    if index == len(body):
        yield apply_subst(head, substitution)
        return
    for fact, extended in _match_against(body[index], stamp, substitution):
        age = stamp[fact]
        if index == pivot:
            if age != round_no - 1:
                continue
        elif index < pivot and age >= round_no - 1:
            continue
        yield from _instantiate(body, pivot, index + 1, extended, stamp, round_no, head)


def naive(program: Program, facts) -> OracleResult:
    """Whole-snapshot rematching; counts repeated instantiations every round."""
    known: set[Fact] = set(facts)
    instantiations = 0
    productive_rounds = 0
    while True:
        snapshot = frozenset(known)
        fresh: set[Fact] = set()
        for rule in program:
            for derived in _all_matches(rule, snapshot):
                instantiations += 1
                if derived not in snapshot:
                    fresh.add(derived)
        if not fresh:
            break
        productive_rounds += 1
        known |= fresh
    return OracleResult(frozenset(known), productive_rounds, instantiations)


def _all_matches(rule, snapshot):
    def go(index, substitution):
        if index == len(rule.body):
            yield apply_subst(rule.head, substitution)
            return
        for _, extended in _match_against(rule.body[index], snapshot, substitution):
            yield from go(index + 1, extended)

    yield from go(0, {})
