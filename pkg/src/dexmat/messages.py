"""Message types and the simulated network.

Three payload kinds travel between servers: partial answers (a query
mid-evaluation, moving to a server that may extend it), facts (a derived
triple touring its remaining destinations), and the termination token.
Messages are never mutated after sending; forwarding builds a fresh one.

The transport keeps one FIFO queue per directed server pair. Delivery
order across different pairs is the scheduler's choice, but within a
pair it is always send order, which the termination scheme relies on.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .model import Fact, Substitution
from .occurrences import OccurrenceMap

WHITE = "white"
BLACK = "black"

PAR = "par"
FCT = "fct"
TOKEN = "token"


@dataclass(frozen=True, slots=True)
class ParMessage:
    kind = PAR
    rule_index: int
    pivot: int
    step: int
    substitution: Substitution
    carried: OccurrenceMap
    tau: int
    chain: tuple[int, int]


@dataclass(frozen=True, slots=True)
class FctMessage:
    kind = FCT
    fact: Fact
    destinations: frozenset[int]
    carried: OccurrenceMap
    clock: int
    chain: tuple[int, int]
    # one tour per derivation; forwarding hops keep it
    tour: tuple[int, int]


@dataclass(frozen=True, slots=True)
class TokenMessage:
    kind = TOKEN
    colour: str
    debit: int
    probe: int


@dataclass(frozen=True, slots=True)
class Terminate:
    """Control signal for threaded runs; never part of the algorithm itself."""

    kind = "terminate"


def is_work(message) -> bool:
    """Partial answers and facts count against termination; tokens do not."""
    return message.kind in (PAR, FCT)


@dataclass
class EdgeStats:
    sent: int = 0
    delivered: int = 0


class Transport:
    """Per-pair FIFO queues with send/delivery accounting."""

    def __init__(self, n_servers: int, keep_log: bool = False):
        self.n_servers = n_servers
        self._queues: dict[tuple[int, int], list] = {}
        self._work_in_flight = 0
        self.sent_by_kind = {PAR: 0, FCT: 0, TOKEN: 0}
        self.edges: dict[tuple[int, int], EdgeStats] = {}
        self.log: Optional[list[tuple[int, int, object]]] = [] if keep_log else None

    def send(self, src: int, dst: int, message) -> None:
        if not 1 <= dst <= self.n_servers:
            raise ValueError(f"no such server: {dst}")
        self._queues.setdefault((src, dst), []).append(message)
        self.sent_by_kind[message.kind] += 1
        self.edges.setdefault((src, dst), EdgeStats()).sent += 1
        if is_work(message):
            self._work_in_flight += 1
        if self.log is not None:
            self.log.append((src, dst, message))

    def pending_edges(self) -> list[tuple[int, int]]:
        return sorted(edge for edge, queue in self._queues.items() if queue)

    def deliver(self, src: int, dst: int):
        queue = self._queues.get((src, dst))
        if not queue:
            raise LookupError(f"nothing queued from {src} to {dst}")
        message = queue.pop(0)
        self.edges[(src, dst)].delivered += 1
        if is_work(message):
            self._work_in_flight -= 1
        return message

    def work_in_flight(self) -> int:
        return self._work_in_flight

    def anything_in_flight(self) -> bool:
        return any(self._queues.values())


class RoundRobinChooser:
    """Cycles an ever-advancing index over whatever list it is offered."""

    def __init__(self) -> None:
        self._tick = 0

    def choose(self, n: int) -> int:
        index = self._tick % n
        self._tick += 1
        return index


class RandomChooser:
    def __init__(self, seed: int):
        self._rng = random.Random(seed)

    def choose(self, n: int) -> int:
        return self._rng.randrange(n)
