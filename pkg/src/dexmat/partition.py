"""Splitting input facts across servers.

Server ids are 1-based. The default scheme hashes the subject, so all
facts about one subject land on one server; an explicit assignment file
can place facts anywhere. The hash is a fixed 64-bit mixer, not
Python's builtin ``hash``, so placements are stable across processes and
runs regardless of interpreter hash randomisation.
"""
from __future__ import annotations

from .model import Fact

_MASK = (1 << 64) - 1


def stable_hash64(value: int) -> int:
    # splitmix64 finaliser
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def predetermined_server(rid: int, n_servers: int) -> int:
    """Fallback home server for a resource; agreed on by every server."""
    return stable_hash64(rid) % n_servers + 1


def empty_partition(n_servers: int) -> dict[int, list[Fact]]:
    if n_servers < 1:
        raise ValueError("need at least one server")
    return {k: [] for k in range(1, n_servers + 1)}


def partition_by_subject(facts: list[Fact], n_servers: int) -> dict[int, list[Fact]]:
    out = empty_partition(n_servers)
    for fact in facts:
        out[predetermined_server(fact[0], n_servers)].append(fact)
    return out


def partition_explicit(
    facts: list[Fact],
    lines: list[int],
    assignment: dict[int, int],
    n_servers: int,
) -> dict[int, list[Fact]]:
    """Place each fact per the line-number assignment; every line must be covered."""
    out = empty_partition(n_servers)
    for fact, line in zip(facts, lines):
        server = assignment.get(line)
        if server is None:
            raise ValueError(f"data line {line} has no server assignment")
        if not 1 <= server <= n_servers:
            raise ValueError(f"data line {line} assigned to unknown server {server}")
        out[server].append(fact)
    return out


def is_subject_grouped(partition: dict[int, list[Fact]]) -> bool:
    """True when no subject's facts are spread over two servers."""
    seen: dict[int, int] = {}
    for server, facts in partition.items():
        for fact in facts:
            before = seen.setdefault(fact[0], server)
            if before != server:
                return False
    return True
