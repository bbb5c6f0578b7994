"""Drivers that run a set of servers to completion.

The default driver is a single-threaded event loop. Each step it
collects every enabled action (a server doing one unit of work, or one
message delivery on one edge) and lets a chooser pick; with a seeded
chooser the whole run is a pure function of its inputs, which the test
suite leans on heavily. A threaded driver runs each server on its own
thread over real queues; it exercises the same server code under honest
nondeterminism, at the price of reproducibility.

The loop does not decide termination itself; it runs until the ring
declares it. A generous step budget turns a livelock into a loud error
instead of a hang, and an optional invariant check runs at moments when
no work message is in flight.
"""
from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .matcher import RuleIndex
from .messages import RandomChooser, RoundRobinChooser, Terminate, Transport
from .model import Fact, Program
from .occurrences import OccurrenceMap, head_constants, init_occurrences
from .partition import is_subject_grouped
from .server import Server, ServerStats
from .termination import single_server_done

WORK_ORDERS = ("facts", "messages")


class LivenessError(RuntimeError):
    """The run exceeded its step budget without the ring declaring."""


@dataclass
class RunResult:
    facts: frozenset[Fact]
    per_server: dict[int, frozenset[Fact]]
    stats: dict[str, int]
    steps: int
    probes: int
    terminated: bool
    matches: list[tuple]
    subject_grouped: bool
    events: list[tuple] = field(default_factory=list)
    elapsed: float = 0.0

    def stats_by_server(self) -> dict[int, dict[str, int]]:
        return self._per_server_stats

    _per_server_stats: dict[int, dict[str, int]] = field(default_factory=dict)


def _aggregate(servers: dict[int, Server]) -> ServerStats:
    total = ServerStats()
    for server in servers.values():
        total.merge(server.stats)
    return total


class Cluster:
    def __init__(
        self,
        program: Program,
        partition: dict[int, list[Fact]],
        *,
        n_servers: Optional[int] = None,
        work_order: str = "facts",
        chooser=None,
        seed: Optional[int] = None,
        record_events: bool = False,
        keep_message_log: bool = False,
        checkpoint: Optional[callable] = None,
        checkpoint_every: int = 0,
    ):
        n = n_servers if n_servers is not None else (max(partition) if partition else 1)
        if any(k < 1 or k > n for k in partition):
            raise ValueError("partition mentions a server outside 1..n")
        if work_order not in WORK_ORDERS:
            raise ValueError(f"work_order must be one of {WORK_ORDERS}")
        self.program = program
        self.n_servers = n
        self.work_order = work_order
        self.subject_grouped = is_subject_grouped(partition)
        self.transport = Transport(n, keep_log=keep_message_log)
        if chooser is None:
            chooser = RoundRobinChooser() if seed is None else RandomChooser(seed)
        self.chooser = chooser
        self.checkpoint = checkpoint
        self.checkpoint_every = checkpoint_every
        self._ticks = 0

        rules = RuleIndex(program)
        occurrences = init_occurrences(partition, head_constants(program), n)
        self.servers: dict[int, Server] = {}
        for k in range(1, n + 1):
            self.servers[k] = Server(
                k,
                n,
                rules,
                occurrences[k],
                self.transport,
                subject_grouped=self.subject_grouped,
                record_events=record_events,
                tick=self._tick,
            )
            self.servers[k].load(partition.get(k, []))

    def _tick(self) -> int:
        return self._ticks

    # ------------------------------------------------------------- running

    def _terminated(self) -> bool:
        one = self.servers[1]
        if self.n_servers == 1:
            if single_server_done(one.ring, not one.busy()):
                one.ring.terminated = True
            return one.ring.terminated
        return one.ring.terminated

    def _budget(self) -> int:
        # token sends deliberately excluded: a probe livelock must not
        # keep extending its own allowance
        derived = sum(s.stats.derived_added for s in self.servers.values())
        sent = self.transport.sent_by_kind
        traffic = sent["par"] + sent["fct"]
        return 200 * (derived + traffic + self.n_servers + 10)

    def _actions(self) -> list[tuple]:
        work = [("work", k) for k in sorted(self.servers) if self.servers[k].has_work()]
        deliver = [("deliver",) + edge for edge in self.transport.pending_edges()]
        if self.work_order == "messages":
            return deliver + work
        return work + deliver

    def run(self, max_steps: Optional[int] = None) -> RunResult:
        started = time.perf_counter()
        steps = 0
        while not self._terminated():
            actions = self._actions()
            if not actions:
                raise RuntimeError(
                    "no runnable action but the ring has not declared termination"
                )
            action = actions[self.chooser.choose(len(actions))]
            if action[0] == "work":
                self.servers[action[1]].work()
            else:
                _, src, dst = action
                message = self.transport.deliver(src, dst)
                if isinstance(message, Terminate):
                    raise TypeError("terminate signal inside an event loop run")
                self.servers[dst].receive(src, message)
            steps += 1
            self._ticks = steps
            limit = max_steps if max_steps is not None else self._budget()
            if steps > limit:
                raise LivenessError(f"no termination after {steps} steps")
            if (
                self.checkpoint is not None
                and self.checkpoint_every
                and steps % self.checkpoint_every == 0
                and self.transport.work_in_flight() == 0
            ):
                self.checkpoint(self)
        return self._result(steps, time.perf_counter() - started)

    # -------------------------------------------------------------- report

    def _result(self, steps: int, elapsed: float) -> RunResult:
        per_server = {
            k: frozenset(s.store.facts()) for k, s in self.servers.items()
        }
        union: set[Fact] = set()
        for facts in per_server.values():
            union |= facts
        matches: list[tuple] = []
        events: list[tuple] = []
        for k in sorted(self.servers):
            matches.extend(self.servers[k].matches)
            events.extend(self.servers[k].events)
        events.sort(key=lambda e: e[0])
        result = RunResult(
            facts=frozenset(union),
            per_server=per_server,
            stats=_aggregate(self.servers).as_dict(),
            steps=steps,
            probes=self.servers[1].ring.probes,
            terminated=self._terminated(),
            matches=matches,
            subject_grouped=self.subject_grouped,
            events=events,
            elapsed=elapsed,
        )
        result._per_server_stats = {
            k: s.stats.as_dict() for k, s in self.servers.items()
        }
        return result


def run_cluster(
    program: Program,
    partition: dict[int, list[Fact]],
    **kwargs,
) -> RunResult:
    return Cluster(program, partition, **kwargs).run()


# ---------------------------------------------------------------- threaded


class _QueueTransport:
    """Drop-in transport whose queues are real thread queues."""

    def __init__(self, n_servers: int, inboxes: dict[int, "queue.Queue"]):
        self.n_servers = n_servers
        self._inboxes = inboxes
        self._lock = threading.Lock()
        self.sent_by_kind = {"par": 0, "fct": 0, "token": 0}

    def send(self, src: int, dst: int, message) -> None:
        with self._lock:
            self.sent_by_kind[message.kind] += 1
        self._inboxes[dst].put((src, message))


def run_threaded(
    program: Program,
    partition: dict[int, list[Fact]],
    *,
    n_servers: Optional[int] = None,
    poll: float = 0.001,
    timeout: float = 60.0,
) -> RunResult:
    """Run every server on its own thread; same protocol, real queues.

    Scheduling is up to the OS, so only the outcome is reproducible, not
    the trace. Event recording stays off; cross-thread tick order would
    be meaningless anyway.
    """
    n = n_servers if n_servers is not None else (max(partition) if partition else 1)
    if any(k < 1 or k > n for k in partition):
        raise ValueError("partition mentions a server outside 1..n")
    inboxes: dict[int, queue.Queue] = {k: queue.Queue() for k in range(1, n + 1)}
    transport = _QueueTransport(n, inboxes)
    rules = RuleIndex(program)
    occurrences = init_occurrences(partition, head_constants(program), n)
    subject_grouped = is_subject_grouped(partition)
    servers = {
        k: Server(
            k,
            n,
            rules,
            occurrences[k],
            transport,
            subject_grouped=subject_grouped,
        )
        for k in range(1, n + 1)
    }
    for k, server in servers.items():
        server.load(partition.get(k, []))

    stop = threading.Event()
    started = time.perf_counter()

    def loop(server: Server) -> None:
        inbox = inboxes[server.id]
        while not stop.is_set():
            drained = False
            while True:
                try:
                    src, message = inbox.get_nowait()
                except queue.Empty:
                    break
                if isinstance(message, Terminate):
                    return
                server.receive(src, message)
                drained = True
            if server.has_work():
                server.work()
                if server.id == 1 and server.ring.terminated:
                    for k in range(1, n + 1):
                        inboxes[k].put((0, Terminate()))
                continue
            if server.n_servers == 1:
                server.ring.terminated = True
                return
            if not drained:
                try:
                    src, message = inbox.get(timeout=poll)
                except queue.Empty:
                    continue
                if isinstance(message, Terminate):
                    return
                server.receive(src, message)

    threads = [
        threading.Thread(target=loop, args=(s,), name=f"server-{k}", daemon=True)
        for k, s in servers.items()
    ]
    for thread in threads:
        thread.start()
    deadline = time.monotonic() + timeout
    for thread in threads:
        remaining = deadline - time.monotonic()
        thread.join(max(remaining, 0.01))
        if thread.is_alive():
            stop.set()
            raise LivenessError("threaded run did not finish in time")

    per_server = {k: frozenset(s.store.facts()) for k, s in servers.items()}
    union: set[Fact] = set()
    for facts in per_server.values():
        union |= facts
    matches: list[tuple] = []
    for k in sorted(servers):
        matches.extend(servers[k].matches)
    result = RunResult(
        facts=frozenset(union),
        per_server=per_server,
        stats=_aggregate(servers).as_dict(),
        steps=-1,
        probes=servers[1].ring.probes,
        terminated=servers[1].ring.terminated,
        matches=matches,
        subject_grouped=subject_grouped,
        elapsed=time.perf_counter() - started,
    )
    result._per_server_stats = {k: s.stats.as_dict() for k, s in servers.items()}
    return result
