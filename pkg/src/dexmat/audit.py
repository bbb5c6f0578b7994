"""Invariant checks over finished or quiescent runs.

Everything here is pure inspection: given a run's output, events and
server states, each check either passes or explains what broke. The
checks encode the properties the protocol is supposed to guarantee:

* soundness and completeness of the final facts against the reference
  fixpoint;
* nonrepetition: every rule instantiation completed exactly once across
  the whole cluster;
* stamp causality: a derived fact always lands with a stamp strictly
  above its pivot's;
* occurrence honesty: mapping entries only claim placements that exist,
  and servers holding a resource know every placement of it;
* a clean final state: empty channels, balanced send/receive counters,
  idle servers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

from .cluster import Cluster, RunResult
from .model import Fact, POSITIONS
from .oracle import OracleResult


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AuditReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, passed, detail))

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            mark = "pass" if c.passed else "FAIL"
            suffix = f" ({c.detail})" if c.detail and not c.passed else ""
            lines.append(f"{mark}  {c.name}{suffix}")
        return "\n".join(lines)


def _show(facts: Iterable[Fact], limit: int = 5) -> str:
    sample = sorted(facts)[:limit]
    return ", ".join(repr(f) for f in sample)


def check_soundness(report: AuditReport, run: RunResult, oracle: OracleResult) -> None:
    extra = run.facts - oracle.facts
    report.add(
        "soundness",
        not extra,
        f"{len(extra)} facts not derivable: {_show(extra)}" if extra else "",
    )


def check_completeness(report: AuditReport, run: RunResult, oracle: OracleResult) -> None:
    missing = oracle.facts - run.facts
    report.add(
        "completeness",
        not missing,
        f"{len(missing)} derivable facts missing: {_show(missing)}" if missing else "",
    )


def check_nonrepetition(
    report: AuditReport, run: RunResult, oracle: OracleResult
) -> None:
    seen: dict[tuple, tuple] = {}
    duplicate = None
    for rule_index, body, chain in run.matches:
        key = (rule_index, body)
        if key in seen and duplicate is None:
            duplicate = key
        seen[key] = chain
    report.add(
        "nonrepetition-distinct",
        duplicate is None,
        f"instantiation completed twice: rule {duplicate[0]} body {duplicate[1]}"
        if duplicate
        else "",
    )
    report.add(
        "nonrepetition-count",
        len(run.matches) == oracle.instantiations,
        f"cluster completed {len(run.matches)} instantiations, reference counts "
        f"{oracle.instantiations}",
    )


def check_stamp_causality(report: AuditReport, run: RunResult) -> None:
    """Derived facts must be stamped strictly after their pivot.

    Works off the recorded timeline: chain openings give each chain its
    pivot stamp, placements tie chains to adding servers, and the add
    events give the stamp the fact eventually got there. Only the chain
    that actually performed the add is held to the bound; chains whose
    fact arrived somewhere it already existed prove nothing.
    """
    if not run.events:
        report.add("stamp-causality", True, "no recorded events")
        return
    pivot_stamp: dict[tuple, int] = {}
    added_stamp: dict[tuple[int, Fact], int] = {}
    placements: list[tuple[tuple, int, Fact]] = []
    for event in run.events:
        kind = event[2]
        if kind == "chain":
            chain, _fact, _rule, _pivot, tau = event[3:8]
            pivot_stamp[chain] = tau
        elif kind == "add":
            _tick, server, _kind, fact, stamp = event
            added_stamp[(server, fact)] = stamp
        elif kind == "placed":
            _tick, server, _kind, fact, chain, was_added = event[:6]
            if was_added:
                placements.append((chain, server, fact))
    bad = []
    for chain, server, fact in placements:
        tau = pivot_stamp.get(chain)
        stamp = added_stamp.get((server, fact))
        if tau is None or stamp is None:
            continue
        if stamp <= tau:
            bad.append((fact, stamp, tau))
    report.add(
        "stamp-causality",
        not bad,
        f"{len(bad)} placements at or before their pivot stamp: {bad[:3]}" if bad else "",
    )


def check_clock_monotonicity(report: AuditReport, run: RunResult) -> None:
    """Along one fact's tour, successive hops carry strictly rising clocks."""
    if not run.events:
        report.add("clock-monotonicity", True, "no recorded events")
        return
    last_clock: dict[tuple, int] = {}
    bad = []
    for event in run.events:
        if event[2] != "fct_send":
            continue
        _tick, _server, _kind, _chain, tour, _to, fact, clock = event
        previous = last_clock.get(tour)
        if previous is not None and clock <= previous:
            bad.append((tour, fact, previous, clock))
        last_clock[tour] = clock
    report.add(
        "clock-monotonicity",
        not bad,
        f"{len(bad)} non-increasing hops: {bad[:3]}" if bad else "",
    )


def _placements(cluster: Cluster) -> dict[tuple[int, int], set[int]]:
    """(resource, position) -> servers whose store currently shows it."""
    out: dict[tuple[int, int], set[int]] = {}
    for k, server in cluster.servers.items():
        for fact in server.store.facts():
            for position in POSITIONS:
                out.setdefault((fact[position], position), set()).add(k)
    return out


def check_occurrences(
    report: AuditReport,
    cluster: Cluster,
    reserved: Optional[set[int]] = None,
    label: str = "",
) -> None:
    """Entry honesty plus holder currency; valid only with no fact or
    partial answer in flight."""
    suffix = f"-{label}" if label else ""
    reserved = reserved or set()
    placements = _placements(cluster)
    overclaims = []
    for k, server in cluster.servers.items():
        for position, rid, servers in server.mu.entries():
            if rid in reserved:
                continue
            actual = placements.get((rid, position), set())
            if not servers <= actual:
                overclaims.append((k, rid, position, sorted(servers - actual)))
    report.add(
        f"occurrence-honesty{suffix}",
        not overclaims,
        f"{len(overclaims)} entries claim absent placements: {overclaims[:3]}"
        if overclaims
        else "",
    )

    holders: dict[int, set[int]] = {}
    for k, server in cluster.servers.items():
        for fact in server.store.facts():
            for rid in fact:
                holders.setdefault(rid, set()).add(k)
    stale = []
    for (rid, position), where in placements.items():
        for k in holders.get(rid, ()):  # servers that hold rid somewhere
            entry = cluster.servers[k].mu.get(rid, position)
            if entry is None or not where <= entry:
                stale.append((k, rid, position, sorted(where - (entry or frozenset()))))
    report.add(
        f"occurrence-currency{suffix}",
        not stale,
        f"{len(stale)} holder mappings missing placements: {stale[:3]}"
        if stale
        else "",
    )


def check_vicinities(report: AuditReport, run: RunResult, input_facts: set[Fact]) -> None:
    """Any two derivations that share a resource have overlapping reach.

    A chain's reach for a resource is every server it visited plus every
    server its final occurrence knowledge listed for that resource. If
    two derived facts mention the same resource from disjoint reaches,
    knowledge about that resource cannot have flowed between them and
    routing was running blind.
    """
    if not run.events:
        report.add("vicinity-overlap", True, "no recorded events")
        return
    visits: dict[tuple, set[int]] = {}
    reach: dict[Fact, tuple[set[int], dict]] = {}
    for event in run.events:
        kind = event[2]
        server = event[1]
        if kind == "chain":
            visits.setdefault(event[3], set()).add(server)
        elif kind in ("par_recv", "fct_recv"):
            visits.setdefault(event[3], set()).add(server)
        elif kind == "placed":
            _tick, srv, _kind, fact, chain, added, snapshot = event
            if added and fact not in input_facts:
                visits.setdefault(chain, set()).add(srv)
                reach[fact] = (visits.get(chain, {srv}), snapshot)
    by_resource: dict[int, list[Fact]] = {}
    for fact in reach:
        for rid in set(fact):
            by_resource.setdefault(rid, []).append(fact)
    disjoint = []
    for rid, facts in by_resource.items():
        if len(facts) < 2:
            continue
        spans = []
        for fact in facts:
            visited, snapshot = reach[fact]
            spans.append(set(visited) | set(snapshot.get(rid, ())))
        if len(spans) <= 300:
            pairs = combinations(range(len(spans)), 2)
        else:
            # too many to cross fully; spot-check everything against one hub
            pairs = ((0, i) for i in range(1, len(spans)))
        for left, right in pairs:
            if not spans[left] & spans[right]:
                disjoint.append((rid, facts[left], facts[right]))
                break
    report.add(
        "vicinity-overlap",
        not disjoint,
        f"{len(disjoint)} resource(s) with unlinked derivations: {disjoint[:2]}"
        if disjoint
        else "",
    )


def check_final_state(report: AuditReport, cluster: Cluster) -> None:
    in_flight = cluster.transport.anything_in_flight()
    report.add(
        "channels-empty",
        not in_flight,
        "messages still queued after termination" if in_flight else "",
    )
    busy = [k for k, s in cluster.servers.items() if s.has_work()]
    report.add(
        "servers-idle",
        not busy,
        f"servers with pending work after termination: {busy}" if busy else "",
    )
    balance = sum(s.ring.counter for s in cluster.servers.values())
    report.add(
        "counters-balanced",
        balance == 0,
        f"work message balance is {balance}, not 0" if balance else "",
    )


def verify_run(
    cluster: Cluster,
    run: RunResult,
    oracle: OracleResult,
    input_facts: set[Fact],
    reserved: Optional[set[int]] = None,
) -> AuditReport:
    """The whole battery; event-based checks skip themselves if the run
    kept no timeline."""
    report = AuditReport()
    check_soundness(report, run, oracle)
    check_completeness(report, run, oracle)
    check_nonrepetition(report, run, oracle)
    check_stamp_causality(report, run)
    check_clock_monotonicity(report, run)
    check_occurrences(report, cluster, reserved=reserved)
    check_vicinities(report, run, input_facts)
    check_final_state(report, cluster)
    return report
