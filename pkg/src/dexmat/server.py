"""One server of the cluster.

A server owns a partition of the data, a timestamped store, its slice of
the occurrence mappings and a seat on the termination ring. Work arrives
as stamped local facts (processed against every query whose pivot
unifies), as partial answers (a query continued from elsewhere) and as
facts touring their destination list. The server never blocks; a driver
calls :meth:`work` and :meth:`receive` and the server reacts.

Query state is chain-scoped: each pivot match opens a chain, and the
substitution plus carried occurrence map belong to that chain alone.
Anything placed in a message is copied first, so concurrent branches of
one chain cannot see each other's extensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .matcher import AnnotatedQuery, RuleIndex
from .model import Fact, POSITIONS, S, Substitution, apply_subst, is_variable
from .messages import FCT, FctMessage, PAR, ParMessage, TOKEN, Transport
from .occurrences import OccurrenceMap, exchange, owner_of
from .store import TimestampedStore
from .termination import RingAction, RingState, SEND_TOKEN, TERMINATE


@dataclass
class ServerStats:
    facts_processed: int = 0
    matches: int = 0
    pars_sent: int = 0
    pars_received: int = 0
    fcts_sent: int = 0
    fcts_received: int = 0
    broadcast_pars: int = 0
    derived_added: int = 0
    duplicates: int = 0
    tokens_sent: int = 0
    syncs: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)

    def merge(self, other: "ServerStats") -> None:
        for key, value in other.__dict__.items():
            setattr(self, key, getattr(self, key) + value)


class Server:
    def __init__(
        self,
        server_id: int,
        n_servers: int,
        rule_index: RuleIndex,
        occurrences: OccurrenceMap,
        transport: Transport,
        subject_grouped: bool = False,
        record_events: bool = False,
        tick: Optional[Callable[[], int]] = None,
    ):
        self.id = server_id
        self.n_servers = n_servers
        self.rules = rule_index
        self.mu = occurrences
        self.transport = transport
        self.subject_grouped = subject_grouped
        self.store = TimestampedStore()
        self.ring = RingState(server_id, n_servers)
        self.stats = ServerStats()
        self.record_events = record_events
        self.events: list[tuple] = []
        self.matches: list[tuple] = []
        self._tick = tick or (lambda: 0)
        self._chain_seq = 0
        self._tour_seq = 0

    # ------------------------------------------------------------- driving

    def load(self, facts: Iterable[Fact]) -> None:
        for fact in facts:
            self.store.add(fact)

    def busy(self) -> bool:
        return self.store.has_pending()

    def has_work(self) -> bool:
        return self.busy() or self.ring.wants_to_act()

    def work(self) -> bool:
        """Perform one unit of work; returns False if there was none."""
        fact = self.store.next_ready()
        if fact is not None:
            self.process_fact(fact)
            return True
        if self.store.has_unstamped:
            # nothing ready but facts are waiting: stamp them ourselves
            self.synchronise(self.store.clock)
            return True
        action = self.ring.act_when_idle()
        if action is not None:
            self._run_ring_action(action)
            return True
        return False

    def receive(self, src: int, message) -> None:
        if message.kind == TOKEN:
            self.ring.note_token(message)
            return
        self.ring.note_work_received()
        if message.kind == PAR:
            self.process_par(message)
        elif message.kind == FCT:
            self.process_fct(message)
        else:
            raise TypeError(f"unexpected message kind {message.kind!r}")

    def _run_ring_action(self, action: RingAction) -> None:
        if action.what == SEND_TOKEN:
            self.transport.send(self.id, action.to, action.token)
            self.stats.tokens_sent += 1
        elif action.what == TERMINATE:
            self._event("terminate")
        else:
            raise ValueError(action.what)

    # ------------------------------------------------------------ protocol

    def synchronise(self, tau: int) -> None:
        before = self.store.clock
        stamped = self.store.synchronise(tau)
        if self.store.clock != before:
            self.stats.syncs += 1
        for fact in stamped:
            self._event("add", fact, self.store.stamp_of(fact))

    def process_fact(self, fact: Fact) -> None:
        tau = self.store.stamp_of(fact)
        assert tau is not None, "processed an unstamped fact"
        self.synchronise(tau)
        self.stats.facts_processed += 1
        self._event("process", fact, tau)
        for query, substitution in self.rules.matches(fact):
            self._chain_seq += 1
            chain = (self.id, self._chain_seq)
            self._event("chain", chain, fact, query.rule_index, query.pivot, tau)
            carried = OccurrenceMap()
            for variable in query.pivot_carry:
                carried.merge_resource(self.mu, substitution[variable])
            self.finish_match(chain, query, 0, substitution, carried, tau)

    def process_par(self, message: ParMessage) -> None:
        self.stats.pars_received += 1
        self._event("par_recv", message.chain, message.step, message.tau)
        self.synchronise(message.tau)
        query = self.rules.query(message.rule_index, message.pivot)
        self.finish_match(
            message.chain,
            query,
            message.step,
            dict(message.substitution),
            message.carried.copy(),
            message.tau,
        )

    def process_fct(self, message: FctMessage) -> None:
        self.stats.fcts_received += 1
        self._event("fct_recv", message.chain, message.fact)
        self.synchronise(message.clock)
        self._route_fact(
            message.chain,
            message.fact,
            set(message.destinations),
            message.carried.copy(),
            message.tour,
        )

    def finish_match(
        self,
        chain: tuple[int, int],
        query: AnnotatedQuery,
        step_index: int,
        substitution: Substitution,
        carried: OccurrenceMap,
        tau: int,
    ) -> None:
        if step_index == len(query.steps):
            self._finish_head(chain, query, substitution, carried, tau)
            return
        step = query.steps[step_index]
        pattern = apply_subst(step.atom, substitution)

        # Remote continuations first, so the carried map is pre-branch.
        # A position only narrows the destination set if the chain has an
        # entry for its resource; with no usable position the query goes
        # everywhere.
        destinations: Optional[set[int]] = None
        for position in POSITIONS:
            term = pattern[position]
            if is_variable(term):
                continue
            known = carried.get(term, position)
            if known is None:
                continue
            destinations = set(known) if destinations is None else destinations & known
        if destinations is None:
            destinations = set(range(1, self.n_servers + 1))
            self.stats.broadcast_pars += 1
        for destination in sorted(destinations):
            if destination == self.id:
                continue
            message = ParMessage(
                rule_index=query.rule_index,
                pivot=query.pivot,
                step=step_index,
                substitution=dict(substitution),
                carried=carried.copy(),
                tau=tau,
                chain=chain,
            )
            self.transport.send(self.id, destination, message)
            self.ring.note_work_sent(destination)
            self.stats.pars_sent += 1
            self._event("par_send", chain, destination, step_index, tau)

        for fact, extended in list(
            self.store.evaluate(step.atom, step.comparison, tau, substitution)
        ):
            branch = carried.copy()
            for variable in step.carry:
                branch.merge_resource(self.mu, extended[variable])
            self.finish_match(chain, query, step_index + 1, extended, branch, tau)

    def _finish_head(
        self,
        chain: tuple[int, int],
        query: AnnotatedQuery,
        substitution: Substitution,
        carried: OccurrenceMap,
        tau: int,
    ) -> None:
        head = apply_subst(query.rule.head, substitution)
        assert not any(is_variable(t) for t in head), "unsafe rule slipped through"
        self.stats.matches += 1
        body = tuple(apply_subst(atom, substitution) for atom in query.rule.body)
        self.matches.append((query.rule_index, body, chain))

        for term in query.rule.head:
            if not is_variable(term):
                carried.merge_resource(self.mu, term)
        home = owner_of(head[S], carried, self.mu, self.n_servers, self.subject_grouped)
        destinations = {home}
        for position in POSITIONS:
            rid = head[position]
            entry = carried.get(rid, position)
            if entry is None or home not in entry:
                # a new placement; everyone who knows this resource hears of it
                for other_position in POSITIONS:
                    others = carried.get(rid, other_position)
                    if others:
                        destinations |= others
                carried.extend(rid, position, {home})
        self._route_fact(chain, head, destinations, carried)

    def _route_fact(
        self,
        chain: tuple[int, int],
        fact: Fact,
        destinations: set[int],
        carried: OccurrenceMap,
        tour: Optional[tuple[int, int]] = None,
    ) -> None:
        if tour is None:
            self._tour_seq += 1
            tour = (self.id, self._tour_seq)
        destinations |= exchange(self.mu, carried)
        destinations.discard(self.id)
        home = owner_of(fact[S], carried, self.mu, self.n_servers, self.subject_grouped)
        if not destinations:
            if home == self.id:
                self._add_fact(chain, fact, carried)
            else:
                # nobody left to tell, but the fact still is not home
                self._send_fct(chain, fact, frozenset({home}), carried, home, tour)
            return
        rest = destinations - {home}
        nxt = min(rest) if rest else home
        self._send_fct(chain, fact, frozenset(destinations), carried, nxt, tour)

    def _send_fct(
        self,
        chain: tuple[int, int],
        fact: Fact,
        destinations: frozenset[int],
        carried: OccurrenceMap,
        to: int,
        tour: tuple[int, int],
    ) -> None:
        message = FctMessage(
            fact=fact,
            destinations=destinations,
            carried=carried.copy(),
            clock=self.store.clock,
            chain=chain,
            tour=tour,
        )
        self.transport.send(self.id, to, message)
        self.ring.note_work_sent(to)
        self.stats.fcts_sent += 1
        self._event("fct_send", chain, tour, to, fact, message.clock)

    def _add_fact(self, chain: tuple[int, int], fact: Fact, carried: OccurrenceMap) -> None:
        added = self.store.add(fact)
        if added:
            self.stats.derived_added += 1
        else:
            self.stats.duplicates += 1
        for position in POSITIONS:
            entry = carried.get(fact[position], position)
            if entry is None or self.id not in entry:
                carried.extend(fact[position], position, {self.id})
                self.mu.extend(fact[position], position, {self.id})
        if self.record_events:
            snapshot = {}
            for rid in set(fact):
                union: set[int] = set()
                for position in POSITIONS:
                    entry = carried.get(rid, position)
                    if entry:
                        union |= entry
                snapshot[rid] = frozenset(union)
            self._event("placed", fact, chain, added, snapshot)

    def _event(self, kind: str, *payload) -> None:
        if self.record_events:
            self.events.append((self._tick(), self.id, kind) + payload)
