"""Deterministic discrete-event simulation of event and command propagation.

Every hop samples its own delay when the message is put on it, so two
messages on the same link can overtake each other. Delays are drawn in
queue-processing order from a single seeded stream, which makes a run a pure
function of (scenario, seed).
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .apps import builtin_catalog, catalog_by_id, match_rules
from .model import (
    EDGE,
    MOBILE_APP,
    SENSOR,
    TA_CLOUD,
    USER_CLOUD,
    VENDOR_CLOUD,
    VOICE_ASSISTANT,
    Action,
    AppRule,
    ConfigurationError,
    EventRecord,
    EventSpec,
    LinkDelayModel,
    MessageRecord,
    ScenarioConfig,
    Topology,
    Trace,
    build_topology,
    dispatch_index,
)

log = logging.getLogger(__name__)

MAX_REDRAWS = 8
MIN_DELAY = 0.001
# times are kept on a microsecond grid so traces serialise exactly
RESOLUTION = 1e-6


def sample_hop_delay(link: LinkDelayModel, rng: random.Random) -> float:
    """Draw a strictly positive delay from Normal(mean, std²).

    Non-positive draws (anything below the time resolution) are redrawn up to
    eight times, after which the delay is clamped to 1 ms.
    """
    if not link.mean > 0:
        raise ConfigurationError("link mean must be > 0")
    for _ in range(1 + MAX_REDRAWS):
        d = rng.gauss(link.mean, link.std)
        if d >= RESOLUTION:
            return d
    return MIN_DELAY


@dataclass
class SimClock:
    now: float = 0.0

    def advance(self, t: float) -> None:
        if t < self.now:
            raise RuntimeError(f"clock moved backwards: {t} < {self.now}")
        self.now = t


@dataclass
class _Candidate:
    rule: AppRule
    action: Action
    rank: int
    dispatch: int


@dataclass
class _EventFlight:
    """An event on its way to the cloud(s) that will act on it."""

    event: EventSpec
    prefix: Tuple[str, ...]
    hops: List[Tuple[str, float]]
    candidates: List[_Candidate]
    route: Tuple[str, ...] = ()  # default ingress when no rule matched


@dataclass
class _CommandFlight:
    message: MessageRecord
    path: Tuple[str, ...]
    pos: int  # index on path of the component just reached


@dataclass(order=True)
class PendingDelivery:
    due: float
    tie_break: int
    component: str = field(compare=False)
    flight: object = field(compare=False)


class Simulator:
    """Routes events and commands over a topology for a set of installed apps.

    ``rules`` are the installed apps. ``known_rules`` (defaults to the built-in
    catalog plus ``rules``) only inform the ingress route of events that no
    installed app reacts to.
    """

    def __init__(
        self,
        topology: Topology,
        rules: Sequence[AppRule],
        seed: int = 0,
        known_rules: Optional[Iterable[AppRule]] = None,
    ):
        self.topology = topology
        self.rules = list(rules)
        self.rng = random.Random(seed)
        self.clock = SimClock()
        self._kinds = topology.kinds
        self._queue: List[PendingDelivery] = []
        self._seq = 0
        self._next_msg = 0
        self._messages: List[MessageRecord] = []
        self._unmatched: List[EventRecord] = []
        for r in self.rules:
            topology.check_rule(r)
        known = list(builtin_catalog() if known_rules is None else known_rules) + self.rules
        self._ingress: Dict[str, Tuple[str, ...]] = {}
        for r in known:
            for b in r.branches:
                for a in b.actions:
                    if any(c not in topology for c in a.path):
                        continue
                    prefix = a.path[: dispatch_index(a.path, self._kinds) + 1]
                    best = self._ingress.get(a.path[0])
                    if best is None or len(prefix) < len(best):
                        self._ingress[a.path[0]] = prefix

    # scheduling ------------------------------------------------------------

    def _push(self, due: float, component: str, flight: object) -> None:
        if due < self.clock.now:
            raise RuntimeError("delivery scheduled in the past")
        heapq.heappush(self._queue, PendingDelivery(due, self._seq, component, flight))
        self._seq += 1

    def _send(self, src: str, dst: str, flight: object) -> None:
        delay = sample_hop_delay(self.topology.link(src, dst), self.rng)
        self._push(round(self.clock.now + delay, 6), dst, flight)

    def default_route(self, source: str) -> Tuple[str, ...]:
        """Ingress path used for an event no installed app subscribes to."""
        if source in self._ingress:
            return self._ingress[source]
        kind = self.topology[source].kind
        user = self.topology.of_kind(USER_CLOUD)
        if not user:
            raise ConfigurationError("topology has no user IoT cloud")
        cloud = user[0].id
        if kind == SENSOR:
            edges = self.topology.of_kind(EDGE)
            if not edges:
                raise ConfigurationError("topology has no edge device")
            route = (source, edges[0].id, cloud)
        elif kind == VOICE_ASSISTANT:
            vendor = self.topology[source].vendor
            clouds = [c for c in self.topology.of_kind(VENDOR_CLOUD) if c.vendor == vendor]
            route = (source, clouds[0].id, cloud) if clouds else (source, cloud)
        elif kind == MOBILE_APP:
            route = (source, cloud)
        else:
            raise ConfigurationError(f"{source!r} ({kind}) cannot emit events")
        for x, y in zip(route, route[1:]):
            self.topology.link(x, y)
        return route

    def inject_event(self, event: EventSpec) -> None:
        """Schedule ``event`` to leave its source at ``event.ts``."""
        if event.source not in self.topology:
            raise ConfigurationError(f"event {event.id}: unknown source {event.source!r}")
        if event.ts < self.clock.now:
            raise ConfigurationError(f"event {event.id}: ts {event.ts} is in the past")
        cands = []
        for rule in match_rules(event, self.rules):
            for a in rule.fire(event):
                cands.append(_Candidate(rule, a, len(cands), dispatch_index(a.path, self._kinds)))
        route = () if cands else self.default_route(event.source)
        flight = _EventFlight(event, (event.source,), [], cands, route)
        self._push(event.ts, event.source, flight)

    # delivery --------------------------------------------------------------

    def dispatch_at_cloud(self, cloud: str, flight: _EventFlight) -> List[MessageRecord]:
        """Turn an event arriving at ``cloud`` into one message per matching action."""
        if self._kinds[cloud] not in (USER_CLOUD, TA_CLOUD):
            raise ConfigurationError(f"{cloud!r} cannot dispatch commands")
        here = len(flight.prefix) - 1
        out = []
        for c in flight.candidates:
            if c.dispatch != here:
                continue
            m = MessageRecord(
                msg_id=self._next_msg,
                rule=c.rule.id,
                event=flight.event,
                actuator=c.action.actuator,
                command=c.action.command,
                action_index=c.rank,
                dispatch_hop=len(flight.hops) - 1,
                hops=list(flight.hops),
            )
            self._next_msg += 1
            out.append(m)
        return out

    def _on_event(self, component: str, flight: _EventFlight) -> None:
        if len(flight.prefix) > 1 or component != flight.event.source:
            flight.hops.append((component, self.clock.now))
        here = len(flight.prefix) - 1
        if flight.route:
            if here == len(flight.route) - 1:
                ev = flight.event
                listeners = tuple(r.id for r in self.rules if r.listens_to(ev.source, ev.name))
                self._unmatched.append(EventRecord(ev, flight.hops, listeners))
                return
            nxt = flight.route[here + 1]
            self._send(component, nxt, _EventFlight(
                flight.event, flight.prefix + (nxt,), flight.hops, [], flight.route))
            return
        if here > 0 and any(c.dispatch == here for c in flight.candidates):
            for m in self.dispatch_at_cloud(component, flight):
                path = next(c.action.path for c in flight.candidates if c.rank == m.action_index)
                self._advance_command(_CommandFlight(m, path, here))
        onward: Dict[str, List[_Candidate]] = {}
        for c in flight.candidates:
            if c.dispatch > here:
                onward.setdefault(c.action.path[here + 1], []).append(c)
        for nxt, cands in onward.items():
            hops = flight.hops if len(onward) == 1 else list(flight.hops)
            self._send(component, nxt, _EventFlight(flight.event, flight.prefix + (nxt,), hops, cands))

    def _advance_command(self, flight: _CommandFlight) -> None:
        nxt = flight.path[flight.pos + 1]
        self._send(flight.path[flight.pos], nxt, _CommandFlight(flight.message, flight.path, flight.pos + 1))

    def _on_command(self, component: str, flight: _CommandFlight) -> None:
        m = flight.message
        m.hops.append((component, self.clock.now))
        if flight.pos == len(flight.path) - 1:
            m.ta = self.clock.now
            self._messages.append(m)
        else:
            self._advance_command(flight)

    def step(self) -> bool:
        if not self._queue:
            return False
        item = heapq.heappop(self._queue)
        self.clock.advance(item.due)
        if isinstance(item.flight, _EventFlight):
            self._on_event(item.component, item.flight)
        else:
            self._on_command(item.component, item.flight)
        return True

    def run_until_empty(self, scenario: str = "", seed: Optional[int] = None) -> Trace:
        while self.step():
            pass
        messages = sorted(self._messages, key=lambda m: m.msg_id)
        return Trace(messages, list(self._unmatched), scenario, seed)


def installed_rules(scenario: ScenarioConfig, catalog: Optional[Iterable[AppRule]] = None) -> List[AppRule]:
    by_id = catalog_by_id(catalog)
    thresholds = dict(scenario.thresholds)
    rules = []
    for app in scenario.apps:
        if app not in by_id:
            raise ConfigurationError(f"scenario {scenario.name}: unknown app {app!r}")
        rule = by_id[app]
        if app in thresholds:
            rule = rule.with_threshold(thresholds[app])
        rules.append(rule)
    for app in thresholds:
        if app not in by_id:
            raise ConfigurationError(f"scenario {scenario.name}: threshold for unknown app {app!r}")
    return rules


def run(
    scenario: ScenarioConfig,
    topology: Optional[Topology] = None,
    catalog: Optional[Iterable[AppRule]] = None,
) -> Trace:
    """Simulate ``scenario`` to completion and return its trace."""
    topo = topology or build_topology()
    if scenario.links:
        topo = topo.with_links(scenario.links)
    catalog = list(builtin_catalog() if catalog is None else catalog)
    rules = installed_rules(scenario, catalog)
    sim = Simulator(topo, rules, seed=scenario.seed, known_rules=catalog)
    events = scenario.schedule()
    for e in events:
        sim.inject_event(e)
    trace = sim.run_until_empty(scenario.name, scenario.seed)
    log.debug("%s seed=%d: %d events, %d messages", scenario.name, scenario.seed, len(events), len(trace))
    return trace
