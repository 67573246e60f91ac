"""Misordering predicates over traces and per-entity misordered-message rates.

A message pair (i, j) is an inversion when i was created later (ts_i > ts_j)
but its command reached the actuator first (ta_i < ta_j). The three
predicates differ only in how the two messages must relate:

* P1: same source, same actuator, different commands
* P2: different sources, same actuator, different commands
* P3: different actuators whose commands share a declared temporal relation
"""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .model import (
    AnalysisError,
    ConfigurationError,
    MessageRecord,
    TemporalRelation,
    Topology,
    Trace,
    UndefinedRateError,
    build_topology,
)

P1, P2, P3 = "P1", "P2", "P3"
KINDS = (P1, P2, P3)
ADJACENT, ANY = "adjacent", "any"
EVENT, COMMAND = "event", "command"


@dataclass(frozen=True, order=True)
class Violation:
    kind: str
    i: int
    j: int
    entity: str

    @property
    def pair(self) -> Tuple[int, int]:
        return (self.i, self.j)


def _checked(trace: Trace) -> List[MessageRecord]:
    trace.require_complete()
    return list(trace.messages)


def _inverted(mi: MessageRecord, mj: MessageRecord) -> bool:
    return mi.ts > mj.ts and mi.ta < mj.ta


def _relation_index(relations: Sequence[TemporalRelation]) -> Dict[Tuple[str, str], set]:
    idx: Dict[Tuple[str, str], set] = defaultdict(set)
    for k, rel in enumerate(relations):
        for step in rel.steps:
            idx[step].add(k)
    return idx


def check_relations(relations: Sequence[TemporalRelation], topology: Optional[Topology] = None) -> None:
    topo = topology or build_topology()
    for rel in relations:
        for a in rel.actuators:
            if a not in topo:
                raise ConfigurationError(f"relation {rel.name or rel.steps}: unknown actuator {a!r}")


def _inversions_within(group: List[MessageRecord], keep) -> List[Tuple[MessageRecord, MessageRecord]]:
    """Inverted pairs inside ``group`` accepted by ``keep``, via a ts-sorted sweep."""
    group = sorted(group, key=lambda m: (m.ts, m.msg_id))
    stamps = [m.ts for m in group]
    out = []
    for mi in group:
        # only strictly earlier-created messages can be mj
        for mj in group[: bisect.bisect_left(stamps, mi.ts)]:
            if mi.ta < mj.ta and keep(mi, mj):
                out.append((mi, mj))
    return out


def detect_p1(trace: Trace) -> List[Violation]:
    """Same source and actuator, different commands, received out of order."""
    groups: Dict[Tuple[str, str], List[MessageRecord]] = defaultdict(list)
    for m in _checked(trace):
        groups[(m.source, m.actuator)].append(m)
    out = []
    for (_, actuator), group in groups.items():
        for mi, mj in _inversions_within(group, lambda a, b: a.command != b.command):
            out.append(Violation(P1, mi.msg_id, mj.msg_id, actuator))
    return sorted(out)


def detect_p2(trace: Trace) -> List[Violation]:
    """Different sources, same actuator, different commands, received out of order."""
    groups: Dict[str, List[MessageRecord]] = defaultdict(list)
    for m in _checked(trace):
        groups[m.actuator].append(m)
    out = []
    for actuator, group in groups.items():
        keep = lambda a, b: a.source != b.source and a.command != b.command
        for mi, mj in _inversions_within(group, keep):
            out.append(Violation(P2, mi.msg_id, mj.msg_id, actuator))
    return sorted(out)


def _should_follow(mi: MessageRecord, mj: MessageRecord, rel: TemporalRelation) -> bool:
    """True when ``mi`` is due after ``mj`` under ``rel``.

    Creation time decides; commands created at the same instant (one event
    fanning out) follow the relation's declared step order.
    """
    if mi.ts != mj.ts:
        return mi.ts > mj.ts
    return rel.steps.index((mi.actuator, mi.command)) > rel.steps.index((mj.actuator, mj.command))


def detect_p3(
    trace: Trace,
    relations: Sequence[TemporalRelation],
    topology: Optional[Topology] = None,
) -> List[Violation]:
    """Commands of different, temporally related actuators received out of order.

    Only pairs whose (actuator, command) steps both occur in one relation are
    considered.
    """
    relations = list(relations)
    check_relations(relations, topology)
    idx = _relation_index(relations)
    by_rel: Dict[int, List[MessageRecord]] = defaultdict(list)
    for m in _checked(trace):
        for k in idx.get((m.actuator, m.command), ()):
            by_rel[k].append(m)
    found = set()
    for k, group in by_rel.items():
        rel = relations[k]
        order = lambda m: (m.ts, rel.steps.index((m.actuator, m.command)))
        group = sorted(group, key=lambda m: (order(m), m.msg_id))
        keys = [order(m) for m in group]
        for mi in group:
            for mj in group[: bisect.bisect_left(keys, order(mi))]:
                if mi.actuator != mj.actuator and mi.ta < mj.ta:
                    found.add((mi.msg_id, mj.msg_id, mi.actuator))
    return sorted(Violation(P3, i, j, a) for i, j, a in found)


def relation_rate(trace: Trace, relations: Sequence[TemporalRelation]) -> float:
    """Percentage of relation-covered commands taking part in a P3 violation."""
    covered = [m for m in _checked(trace) if any(r.covers(m.actuator, m.command) for r in relations)]
    if not covered:
        raise UndefinedRateError("no commands covered by the relations")
    involved = set()
    for v in detect_p3(trace, relations):
        involved.update(v.pair)
    return 100.0 * len(involved) / len(covered)


def brute_force(
    trace: Trace,
    kind: str,
    relations: Optional[Sequence[TemporalRelation]] = None,
) -> List[Violation]:
    """Literal O(n²) evaluation of one predicate over all ordered pairs."""
    if kind not in KINDS:
        raise ValueError(f"unknown predicate {kind!r}")
    messages = _checked(trace)
    if len(messages) > 10_000:
        raise AnalysisError("brute force is limited to 10^4 messages")
    rels = list(relations or ())
    out = []
    for mi in messages:
        for mj in messages:
            if mi is mj:
                continue
            if kind != P3 and not _inverted(mi, mj):
                continue
            if kind == P1:
                ok = mi.source == mj.source and mi.actuator == mj.actuator and mi.command != mj.command
            elif kind == P2:
                ok = mi.source != mj.source and mi.actuator == mj.actuator and mi.command != mj.command
            else:
                ok = mi.ta < mj.ta and mi.actuator != mj.actuator and any(
                    r.covers(mi.actuator, mi.command)
                    and r.covers(mj.actuator, mj.command)
                    and _should_follow(mi, mj, r)
                    for r in rels
                )
            if ok:
                out.append(Violation(kind, mi.msg_id, mj.msg_id, mi.actuator))
    return sorted(out)


def detect(trace: Trace, kind: str, relations: Sequence[TemporalRelation] = ()) -> List[Violation]:
    if kind == P1:
        return detect_p1(trace)
    if kind == P2:
        return detect_p2(trace)
    if kind == P3:
        return detect_p3(trace, relations)
    raise ValueError(f"unknown predicate {kind!r}")


# arrival ordering --------------------------------------------------------


@dataclass(frozen=True)
class Arrival:
    """One message (or shared event leg) reaching one entity."""

    entity: str
    phase: str
    time: float
    origin: Tuple[float, int]
    rules: frozenset
    visit: int = 0  # earlier arrivals of the same message at this entity


def _visits(hops) -> List[int]:
    seen: Dict[str, int] = defaultdict(int)
    out = []
    for entity, _ in hops:
        out.append(seen[entity])
        seen[entity] += 1
    return out


def arrivals(trace: Trace, group: Optional[Iterable[str]] = None) -> List[Arrival]:
    """Every arrival in ``trace``, restricted to messages of the apps in ``group``.

    Hops on the shared leg before the dispatching cloud are event arrivals and
    are reported once per event, however many commands the event fans out
    into. Later hops are command arrivals, one per message. Commands created
    by the same event are ordered by dispatch rank.
    """
    wanted = None if group is None else frozenset(group)
    legs: Dict[tuple, list] = {}
    out: List[Arrival] = []
    for m in trace.messages:
        if wanted is not None and m.rule not in wanted:
            continue
        ev = m.event
        visits = _visits(m.hops)
        for h, (entity, t) in enumerate(m.hops):
            if h <= m.dispatch_hop:
                key = (ev.source, ev.id, ev.ts, h, entity)
                if key in legs:
                    legs[key][2].add(m.rule)
                else:
                    legs[key] = [entity, t, {m.rule}, (ev.ts, 0), visits[h]]
            else:
                origin = (ev.ts, m.action_index)
                out.append(Arrival(entity, COMMAND, t, origin, frozenset({m.rule}), visits[h]))
    for rec in trace.unmatched:
        rules = set(rec.rules)
        if wanted is not None:
            rules &= wanted
            if not rules:
                continue
        ev = rec.event
        visits = _visits(rec.hops)
        for h, (entity, t) in enumerate(rec.hops):
            key = (ev.source, ev.id, ev.ts, h, entity)
            if key in legs:
                legs[key][2].update(rules)
            else:
                legs[key] = [entity, t, set(rules), (ev.ts, 0), visits[h]]
    for entity, t, rules, origin, visit in legs.values():
        out.append(Arrival(entity, EVENT, t, origin, frozenset(rules), visit))
    return out


def flag_misordered(stream: Sequence[Arrival], mode: str = ADJACENT) -> List[Tuple[Arrival, bool]]:
    """Sort one entity's arrivals by time and flag the misordered ones.

    ``adjacent``: flagged when the immediately preceding arrival was created
    strictly later. ``any``: flagged when any earlier arrival was created
    strictly later. Simultaneous arrivals are taken in creation order.
    """
    if mode not in (ADJACENT, ANY):
        raise ValueError(f"unknown rate mode {mode!r}")
    ordered = sorted(stream, key=lambda a: (a.time, a.origin))
    out = []
    prev = None
    for a in ordered:
        bad = prev is not None and prev > a.origin
        out.append((a, bad))
        if mode == ADJACENT or prev is None or a.origin > prev:
            prev = a.origin
    return out


def flagged_arrivals(
    trace: Trace, group: Optional[Iterable[str]] = None, mode: str = ADJACENT
) -> List[Tuple[Arrival, bool]]:
    """Flags for every arrival, computed per (entity, phase) stream."""
    streams: Dict[Tuple[str, str], List[Arrival]] = defaultdict(list)
    for a in arrivals(trace, group):
        streams[(a.entity, a.phase)].append(a)
    out = []
    for key in sorted(streams):
        out.extend(flag_misordered(streams[key], mode))
    return out


@dataclass
class EntityRate:
    total: int
    misordered: int

    @property
    def percentage(self) -> float:
        if self.total == 0:
            raise UndefinedRateError("no arrivals")
        return 100.0 * self.misordered / self.total


def entity_rates(
    trace: Trace,
    group: Optional[Iterable[str]] = None,
    mode: str = ADJACENT,
    phase: Optional[str] = None,
) -> Dict[str, EntityRate]:
    rates: Dict[str, EntityRate] = {}
    for a, bad in flagged_arrivals(trace, group, mode):
        if phase is not None and a.phase != phase:
            continue
        r = rates.setdefault(a.entity, EntityRate(0, 0))
        r.total += 1
        r.misordered += bad
    return dict(sorted(rates.items()))


def misordered_rate(
    trace: Trace,
    entity: str,
    mode: str = ADJACENT,
    group: Optional[Iterable[str]] = None,
    phase: Optional[str] = None,
) -> float:
    """Percentage of arrivals at ``entity`` that arrive misordered."""
    if not trace.messages and not trace.unmatched:
        raise AnalysisError("trace is empty")
    trace.require_complete()
    rate = entity_rates(trace, group, mode, phase).get(entity)
    if rate is None or rate.total == 0:
        raise UndefinedRateError(f"no arrivals at {entity!r}")
    return rate.percentage


@dataclass
class MisorderReport:
    mode: str
    entities: Dict[str, EntityRate]
    violations: Dict[str, List[Violation]] = field(default_factory=dict)
    # the other counting mode, reported for comparison
    alt_entities: Dict[str, EntityRate] = field(default_factory=dict)


def analyze(
    trace: Trace,
    detectors: Sequence[str] = KINDS,
    relations: Sequence[TemporalRelation] = (),
    mode: str = ADJACENT,
    group: Optional[Iterable[str]] = None,
) -> MisorderReport:
    if not trace.messages and not trace.unmatched:
        raise AnalysisError("trace is empty")
    trace.require_complete()
    group = None if group is None else list(group)
    other = ANY if mode == ADJACENT else ADJACENT
    report = MisorderReport(mode, entity_rates(trace, group, mode), alt_entities=entity_rates(trace, group, other))
    for kind in detectors:
        report.violations[kind] = detect(trace, kind, relations)
    return report
