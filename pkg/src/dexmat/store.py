"""Per-server fact store with logical timestamps.

Facts move through three states: added (present, unstamped), stamped
(visible to matching), processed (popped off the work queue). Stamps are
assigned in batches by :meth:`TimestampedStore.synchronise`, which also
advances the local clock past the supplied timestamp. A fact with no
stamp yet is invisible to :meth:`evaluate`; this is what makes the
before/after-pivot comparisons sound while new facts are still settling.

The work queue keeps arrival order. Because stamps are handed out in
arrival order too, the queue is always a stamped prefix followed by an
unstamped suffix, so readiness is a front check.
"""
from __future__ import annotations

from collections import deque
from typing import Iterator, Optional

from .model import Atom, Dictionary, Fact, Substitution, apply_subst, is_variable

LESS = "<"
LESS_EQUAL = "<="

# index selectors keyed by which positions are bound, best first
_INDEX_KEYS = ((0, 1), (0, 2), (1, 2), (0,), (1,), (2,))


class TimestampedStore:
    def __init__(self) -> None:
        self._facts: set[Fact] = set()
        self._order: list[Fact] = []
        self._stamps: dict[Fact, int] = {}
        self._unstamped: list[Fact] = []
        self._queue: deque[Fact] = deque()
        self.clock: int = 1
        self._indexes: dict[tuple[int, ...], dict[tuple, list[Fact]]] = {
            key: {} for key in _INDEX_KEYS
        }

    def __len__(self) -> int:
        return len(self._facts)

    def __contains__(self, fact: Fact) -> bool:
        return fact in self._facts

    def facts(self) -> Iterator[Fact]:
        return iter(self._order)

    def stamp_of(self, fact: Fact) -> Optional[int]:
        return self._stamps.get(fact)

    @property
    def has_unstamped(self) -> bool:
        return bool(self._unstamped)

    def add(self, fact: Fact) -> bool:
        """Insert ``fact`` unstamped; no-op (and False) if already present.

        Re-derivations keep the earliest stamp: once a fact is in, later
        arrivals never touch its state.
        """
        if fact in self._facts:
            return False
        self._facts.add(fact)
        self._order.append(fact)
        self._unstamped.append(fact)
        self._queue.append(fact)
        for key, index in self._indexes.items():
            index.setdefault(tuple(fact[i] for i in key), []).append(fact)
        return True

    def synchronise(self, tau: int) -> list[Fact]:
        """Catch the clock up to ``tau``; returns the facts stamped by this call.

        When the clock is already past ``tau`` nothing happens. Otherwise
        every unstamped fact gets the current clock value and the clock
        moves to ``tau + 1``, so any two facts stamped by different calls
        have distinct stamps.
        """
        if self.clock > tau:
            return []
        stamped = self._unstamped
        for fact in stamped:
            self._stamps[fact] = self.clock
        self._unstamped = []
        self.clock = tau + 1
        return stamped

    def has_ready(self) -> bool:
        return bool(self._queue) and self._queue[0] in self._stamps

    def has_pending(self) -> bool:
        return bool(self._queue)

    def next_ready(self) -> Optional[Fact]:
        if self.has_ready():
            return self._queue.popleft()
        return None

    def _candidates(self, pattern: Atom) -> Iterator[Fact]:
        for key in _INDEX_KEYS:
            if all(not is_variable(pattern[i]) for i in key):
                return iter(
                    self._indexes[key].get(tuple(pattern[i] for i in key), ())
                )
        return iter(self._order)

    def evaluate(
        self, atom: Atom, comparison: str, tau: int, substitution: Substitution
    ) -> Iterator[tuple[Fact, Substitution]]:
        """Match ``atom`` under ``substitution`` against stamped facts.

        Yields ``(fact, extended substitution)`` for every stored fact
        whose stamp ``T(f)`` satisfies ``T(f) < tau`` or ``T(f) <= tau``
        per ``comparison``. Unstamped facts never match.
        """
        pattern = apply_subst(atom, substitution)
        for fact in self._candidates(pattern):
            stamp = self._stamps.get(fact)
            if stamp is None:
                continue
            if comparison == LESS:
                if not stamp < tau:
                    continue
            elif not stamp <= tau:
                continue
            extended = dict(substitution)
            ok = True
            for pos in range(3):
                term = pattern[pos]
                if is_variable(term):
                    bound = extended.get(term)
                    if bound is None:
                        extended[term] = fact[pos]
                    elif bound != fact[pos]:
                        ok = False
                        break
                elif term != fact[pos]:
                    ok = False
                    break
            if ok:
                yield fact, extended

    def dump(self, dictionary: Dictionary) -> list[str]:
        lines = []
        for fact in sorted(self._facts):
            stamp = self._stamps.get(fact)
            shown = "?" if stamp is None else str(stamp)
            lines.append(f"{dictionary.render_fact(fact)}  # t={shown}")
        return lines
