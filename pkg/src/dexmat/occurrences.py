"""Occurrence mappings: which servers hold a resource at which position.

Each server starts with an exact picture for every resource in its own
vocabulary: for resource r and position pi, the full set of servers
whose input contains r at pi. Rule head constants get an entry on every
server, falling back to a hash-predetermined home when the constant
appears in nobody's input, so all servers agree on where such facts
belong before any are derived.

During evaluation a query carries a partial mapping (same structure,
chain-local) that accumulates what the visited servers know; exchanges
between a carried mapping and a server's own mapping keep both growing
and never shrink an entry.
"""
from __future__ import annotations

from typing import Iterator, Optional

from .model import Atom, Dictionary, Fact, POSITION_NAMES, POSITIONS, S, is_variable
from .partition import predetermined_server

ServerSet = frozenset


class OccurrenceMap:
    """Partial map from (resource, position) to a set of server ids."""

    __slots__ = ("_by_position",)

    def __init__(self) -> None:
        self._by_position: tuple[dict[int, frozenset[int]], ...] = ({}, {}, {})

    def __bool__(self) -> bool:
        return any(self._by_position)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccurrenceMap):
            return NotImplemented
        return self._by_position == other._by_position

    def get(self, rid: int, position: int) -> Optional[frozenset[int]]:
        return self._by_position[position].get(rid)

    def define(self, rid: int, position: int, servers) -> None:
        self._by_position[position][rid] = frozenset(servers)

    def extend(self, rid: int, position: int, servers) -> bool:
        """Union ``servers`` into the entry; returns True if it grew."""
        current = self._by_position[position].get(rid, frozenset())
        union = current | frozenset(servers)
        if union == current and rid in self._by_position[position]:
            return False
        self._by_position[position][rid] = union
        return True

    def merge_resource(self, source: "OccurrenceMap", rid: int) -> None:
        """Copy everything ``source`` knows about ``rid``, at all positions."""
        for position in POSITIONS:
            known = source._by_position[position].get(rid)
            if known is not None:
                self.extend(rid, position, known)

    def entries(self) -> Iterator[tuple[int, int, frozenset[int]]]:
        """All (position, resource, servers) triples, deterministically ordered."""
        for position in POSITIONS:
            table = self._by_position[position]
            for rid in sorted(table):
                yield position, rid, table[rid]

    def copy(self) -> "OccurrenceMap":
        clone = OccurrenceMap()
        for position in POSITIONS:
            clone._by_position[position].update(self._by_position[position])
        return clone

    def entry_count(self) -> int:
        return sum(len(t) for t in self._by_position)

    def dump(self, dictionary: Dictionary) -> list[str]:
        lines = []
        for position, rid, servers in self.entries():
            name = dictionary.decode(rid)
            members = ",".join(str(s) for s in sorted(servers))
            lines.append(f"{name}@{POSITION_NAMES[position]} -> {{{members}}}")
        return lines


def exchange(local: OccurrenceMap, carried: OccurrenceMap, rids) -> set[int]:
    """Reconcile the two mappings' knowledge of the given resources.

    Used when a fact visits a server: for each of the fact's resources,
    the server's mapping and the carried one both become their union.
    Returns the servers the local side knew that the carried entry
    lacked; the caller folds those into the fact's remaining
    destinations, since the carried set was built before this server's
    knowledge was available. A pair of entries that are both undefined
    stays undefined: inventing an empty entry would turn ignorance into
    a claim that the resource occurs nowhere.
    """
    gained: set[int] = set()
    for rid in sorted(set(rids)):
        for position in POSITIONS:
            mine = local.get(rid, position)
            theirs = carried.get(rid, position)
            if mine is None and theirs is None:
                continue
            if mine:
                gained |= mine - (theirs or frozenset())
            union = (mine or frozenset()) | (theirs or frozenset())
            local.define(rid, position, union)
            carried.define(rid, position, union)
    return gained


def head_constants(program) -> set[int]:
    out: set[int] = set()
    for rule in program:
        for term in rule.head:
            if not is_variable(term):
                out.add(term)
    return out


def init_occurrences(
    partition: dict[int, list[Fact]],
    constants: set[int],
    n_servers: int,
) -> dict[int, OccurrenceMap]:
    """Build each server's starting mapping from the input placement."""
    global_occ: tuple[dict[int, set[int]], ...] = ({}, {}, {})
    vocabulary: dict[int, set[int]] = {k: set() for k in partition}
    for server, facts in partition.items():
        for fact in facts:
            for position in POSITIONS:
                rid = fact[position]
                global_occ[position].setdefault(rid, set()).add(server)
                vocabulary[server].add(rid)

    maps: dict[int, OccurrenceMap] = {}
    for server in range(1, n_servers + 1):
        mapping = OccurrenceMap()
        for rid in vocabulary.get(server, ()):
            for position in POSITIONS:
                servers = global_occ[position].get(rid)
                if servers:
                    mapping.define(rid, position, servers)
        for rid in constants:
            placed = False
            for position in POSITIONS:
                servers = global_occ[position].get(rid)
                if servers:
                    mapping.define(rid, position, servers)
                    placed = True
            if not placed:
                # agreed home for constants that predate any occurrence
                mapping.define(rid, S, {predetermined_server(rid, n_servers)})
        maps[server] = mapping
    return maps


def owner_of(
    rid: int,
    carried: Optional[OccurrenceMap],
    local: OccurrenceMap,
    n_servers: int,
    subject_grouped: bool = False,
) -> int:
    """The server a fact with subject ``rid`` belongs to.

    Prefers the query's view, then the server's, then the predetermined
    home. Under subject-grouped placement the subject entry is always a
    single server; the deterministic minimum keeps mixed placements
    workable too.
    """
    candidates = carried.get(rid, S) if carried is not None else None
    if candidates is None:
        candidates = local.get(rid, S)
    if not candidates:
        return predetermined_server(rid, n_servers)
    if subject_grouped:
        assert len(candidates) == 1, f"subject {rid} grouped but spread: {candidates}"
    return min(candidates)
