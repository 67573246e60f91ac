"""Domain types shared by the simulator, the detectors and the experiment harness."""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Tuple


class ConfigurationError(ValueError):
    """Topology, rule or scenario definition is inconsistent."""


class AnalysisError(ValueError):
    """A trace cannot be analysed as requested."""


class UndefinedRateError(AnalysisError):
    """No arrivals at the requested entity, so no rate exists."""


SENSOR = "sensor"
MOBILE_APP = "mobile-app"
VOICE_ASSISTANT = "voice-assistant"
ACTUATOR = "actuator"
EDGE = "edge"
USER_CLOUD = "user-iot-cloud"
VENDOR_CLOUD = "vendor-cloud"
TA_CLOUD = "trigger-action-cloud"

COMPONENT_KINDS = (
    SENSOR,
    MOBILE_APP,
    VOICE_ASSISTANT,
    ACTUATOR,
    EDGE,
    USER_CLOUD,
    VENDOR_CLOUD,
    TA_CLOUD,
)
SOURCE_KINDS = frozenset({SENSOR, MOBILE_APP, VOICE_ASSISTANT})
DISPATCH_KINDS = frozenset({USER_CLOUD, TA_CLOUD})

# Delay table rows are keyed by link class; sensors, actuators and the voice
# assistant all sit behind the "IoT devices" row.
IOT_DEVICE = "iot-device"
LINK_CLASS = {
    SENSOR: IOT_DEVICE,
    ACTUATOR: IOT_DEVICE,
    VOICE_ASSISTANT: IOT_DEVICE,
    MOBILE_APP: MOBILE_APP,
    EDGE: EDGE,
    USER_CLOUD: USER_CLOUD,
    VENDOR_CLOUD: VENDOR_CLOUD,
    TA_CLOUD: TA_CLOUD,
}


@dataclass(frozen=True)
class ComponentSpec:
    id: str
    kind: str
    vendor: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in COMPONENT_KINDS:
            raise ConfigurationError(f"component {self.id!r}: unknown kind {self.kind!r}")

    @property
    def link_class(self) -> str:
        return LINK_CLASS[self.kind]


@dataclass(frozen=True)
class LinkDelayModel:
    """Gaussian delay (processing plus network) between two link classes, in seconds."""

    endpoint_kinds: Tuple[str, str]
    mean: float
    std: float

    def __post_init__(self) -> None:
        if len(self.endpoint_kinds) != 2:
            raise ConfigurationError("a link joins exactly two endpoint kinds")
        if not self.mean > 0:
            raise ConfigurationError(f"link {self.endpoint_kinds}: mean must be > 0")
        if self.std < 0:
            raise ConfigurationError(f"link {self.endpoint_kinds}: std must be >= 0")
        # unordered pair, stored canonically
        object.__setattr__(self, "endpoint_kinds", tuple(sorted(self.endpoint_kinds)))

    @property
    def key(self) -> frozenset:
        return frozenset(self.endpoint_kinds)


@dataclass(frozen=True)
class EventSpec:
    source: str
    name: str
    value: Optional[float] = None
    ts: float = 0.0
    id: int = 0

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise ConfigurationError(f"event {self.id}: ts must be >= 0")


_OPS: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "=": operator.eq,
}
_OP_ALIASES = {"≤": "<=", "≥": ">=", "==": "="}
_PRED_RE = re.compile(r"^\s*(<=|>=|==|≤|≥|<|>|=)\s*(-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)")


@dataclass(frozen=True)
class Predicate:
    """Comparison of an event value against one scalar threshold."""

    op: str
    threshold: float

    def __post_init__(self) -> None:
        op = _OP_ALIASES.get(self.op, self.op)
        if op not in _OPS:
            raise ConfigurationError(f"unsupported predicate operator {self.op!r}")
        object.__setattr__(self, "op", op)

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        """Parse ``"> 30"``, ``"<= 30 °C"`` and the like; trailing units are ignored."""
        m = _PRED_RE.match(text)
        if not m:
            raise ConfigurationError(f"cannot parse predicate {text!r}")
        return cls(m.group(1), float(m.group(2)))

    def holds(self, value: Optional[float]) -> bool:
        if value is None:
            return False
        return _OPS[self.op](value, self.threshold)

    def __str__(self) -> str:
        return f"{self.op} {self.threshold:g}"


@dataclass(frozen=True)
class Trigger:
    source: str
    event: str
    predicate: Optional[Predicate] = None

    def matches(self, event: EventSpec) -> bool:
        if event.source != self.source or event.name != self.event:
            return False
        return self.predicate is None or self.predicate.holds(event.value)


@dataclass(frozen=True)
class Action:
    """One actuation and the component path its message follows, source first."""

    actuator: str
    command: str
    path: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", tuple(self.path))
        if len(self.path) < 2:
            raise ConfigurationError(f"action {self.command!r}: path needs at least two components")
        if self.path[-1] != self.actuator:
            raise ConfigurationError(
                f"action {self.command!r}: path ends at {self.path[-1]!r}, not {self.actuator!r}"
            )


@dataclass(frozen=True)
class Branch:
    trigger: Trigger
    actions: Tuple[Action, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        for a in self.actions:
            if a.path[0] != self.trigger.source:
                raise ConfigurationError(
                    f"action path starts at {a.path[0]!r}, trigger source is {self.trigger.source!r}"
                )


@dataclass(frozen=True)
class AppRule:
    """An installed app: one or more trigger branches, each with ordered actions.

    Apps of the form "do X when A, otherwise Y" carry one branch per case.
    ``trigger`` and ``actions`` expose the first branch.
    """

    id: str
    branches: Tuple[Branch, ...]
    description: str = ""
    tags: frozenset = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "tags", frozenset(self.tags))
        if not self.branches:
            raise ConfigurationError(f"rule {self.id}: no branches")

    @property
    def trigger(self) -> Trigger:
        return self.branches[0].trigger

    @property
    def actions(self) -> Tuple[Action, ...]:
        return self.branches[0].actions

    @property
    def paths(self) -> List[Tuple[str, ...]]:
        return [a.path for b in self.branches for a in b.actions]

    @property
    def sources(self) -> List[str]:
        return list(dict.fromkeys(b.trigger.source for b in self.branches))

    @property
    def actuators(self) -> List[str]:
        return list(dict.fromkeys(a.actuator for b in self.branches for a in b.actions))

    def matches(self, event: EventSpec) -> bool:
        return any(b.trigger.matches(event) for b in self.branches)

    def fire(self, event: EventSpec) -> List[Action]:
        """Actions of every branch whose trigger accepts ``event``, in declared order."""
        return [a for b in self.branches if b.trigger.matches(event) for a in b.actions]

    def listens_to(self, source: str, name: str) -> bool:
        return any(b.trigger.source == source and b.trigger.event == name for b in self.branches)

    def with_threshold(self, value: float) -> "AppRule":
        """Copy with every predicate threshold replaced by ``value``."""
        branches = []
        for b in self.branches:
            t = b.trigger
            if t.predicate is not None:
                t = replace(t, predicate=Predicate(t.predicate.op, value))
            branches.append(Branch(t, b.actions))
        return replace(self, branches=tuple(branches))


@dataclass(frozen=True)
class TemporalRelation:
    """(actuator, command) pairs that must be received in the listed order."""

    steps: Tuple[Tuple[str, str], ...]
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(tuple(s) for s in self.steps))
        if len(self.steps) < 2:
            raise ConfigurationError("a temporal relation needs at least two steps")

    @property
    def actuators(self) -> List[str]:
        return list(dict.fromkeys(a for a, _ in self.steps))

    def covers(self, actuator: str, command: str) -> bool:
        return (actuator, command) in self.steps


def dispatch_index(path: Tuple[str, ...], kinds: Dict[str, str]) -> int:
    """Position on ``path`` of the cloud that turns the event into commands.

    A trigger-action cloud wins over the user IoT cloud when both appear, since
    the user cloud only forwards the event there.
    """
    for want in (TA_CLOUD, USER_CLOUD):
        for i, c in enumerate(path):
            if kinds.get(c) == want:
                return i
    raise ConfigurationError(f"path {' -> '.join(path)} has no dispatching cloud")


@dataclass
class Topology:
    components: List[ComponentSpec]
    links: List[LinkDelayModel]
    # link-class pairs without a table row, resolved to an existing row
    aliases: Dict[frozenset, frozenset] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_id: Dict[str, ComponentSpec] = {}
        for c in self.components:
            if c.id in self._by_id:
                raise ConfigurationError(f"duplicate component id {c.id!r}")
            self._by_id[c.id] = c
        self._links: Dict[frozenset, LinkDelayModel] = {}
        for link in self.links:
            if link.key in self._links:
                raise ConfigurationError(f"duplicate link {link.endpoint_kinds}")
            self._links[link.key] = link

    def __contains__(self, component_id: str) -> bool:
        return component_id in self._by_id

    def __getitem__(self, component_id: str) -> ComponentSpec:
        try:
            return self._by_id[component_id]
        except KeyError:
            raise ConfigurationError(f"unknown component {component_id!r}") from None

    @property
    def kinds(self) -> Dict[str, str]:
        return {c.id: c.kind for c in self.components}

    def of_kind(self, kind: str) -> List[ComponentSpec]:
        return [c for c in self.components if c.kind == kind]

    def link_between_kinds(self, kind_a: str, kind_b: str) -> LinkDelayModel:
        key = frozenset({LINK_CLASS[kind_a], LINK_CLASS[kind_b]})
        key = self.aliases.get(key, key)
        try:
            return self._links[key]
        except KeyError:
            raise ConfigurationError(
                f"no delay model for link {LINK_CLASS[kind_a]} <-> {LINK_CLASS[kind_b]}"
            ) from None

    def link(self, a: str, b: str) -> LinkDelayModel:
        return self.link_between_kinds(self[a].kind, self[b].kind)

    def with_links(self, links: Iterable[LinkDelayModel]) -> "Topology":
        """Copy with the given rows replacing same-endpoint rows."""
        table = {l.key: l for l in self.links}
        for l in links:
            table[l.key] = l
        return Topology(list(self.components), list(table.values()), dict(self.aliases))

    def check_rule(self, rule: AppRule) -> None:
        """Raise unless every path of ``rule`` resolves against this topology."""
        kinds = self.kinds
        for b in rule.branches:
            if b.trigger.source not in self:
                raise ConfigurationError(f"rule {rule.id}: unknown source {b.trigger.source!r}")
            if self[b.trigger.source].kind not in SOURCE_KINDS:
                raise ConfigurationError(f"rule {rule.id}: {b.trigger.source!r} cannot emit events")
            for a in b.actions:
                for x, y in zip(a.path, a.path[1:]):
                    self.link(x, y)
                try:
                    dispatch_index(a.path, kinds)
                except ConfigurationError as exc:
                    raise ConfigurationError(f"rule {rule.id}: {exc}") from None


@dataclass
class MessageRecord:
    """One event-to-command flow ⟨s, e, a, c, ts, ta⟩ with its hop log.

    ``hops`` holds (component, arrival time) for every component after the
    source. Entries up to ``dispatch_hop`` are the shared event leg; the rest
    belong to this command alone.
    """

    msg_id: int
    rule: str
    event: EventSpec
    actuator: str
    command: str
    action_index: int = 0
    dispatch_hop: int = 0
    hops: List[Tuple[str, float]] = field(default_factory=list)
    ta: Optional[float] = None

    @property
    def source(self) -> str:
        return self.event.source

    @property
    def ts(self) -> float:
        return self.event.ts

    @property
    def complete(self) -> bool:
        return self.ta is not None

    @property
    def path(self) -> Tuple[str, ...]:
        return (self.event.source,) + tuple(c for c, _ in self.hops)


@dataclass
class EventRecord:
    """An event that reached a cloud but triggered no installed rule."""

    event: EventSpec
    hops: List[Tuple[str, float]] = field(default_factory=list)
    # installed apps subscribed to this source and event name
    rules: Tuple[str, ...] = ()


@dataclass
class Trace:
    messages: List[MessageRecord]
    unmatched: List[EventRecord] = field(default_factory=list)
    scenario: str = ""
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        seen = set()
        for m in self.messages:
            if m.msg_id in seen:
                raise AnalysisError(f"duplicate msg_id {m.msg_id}")
            seen.add(m.msg_id)

    def __len__(self) -> int:
        return len(self.messages)

    def require_complete(self) -> None:
        for m in self.messages:
            if m.ta is None:
                raise AnalysisError(f"message {m.msg_id} ({m.rule}) has no arrival time")


# Mean ± std in seconds per link class pair, processing time included.
DELAY_TABLE: Tuple[Tuple[str, str, float, float], ...] = (
    (IOT_DEVICE, EDGE, 0.056, 0.007),
    (IOT_DEVICE, VENDOR_CLOUD, 1.4, 0.3),
    (EDGE, USER_CLOUD, 1.5, 0.4),
    (EDGE, VENDOR_CLOUD, 1.5, 0.4),
    (MOBILE_APP, USER_CLOUD, 1.5, 0.4),
    (MOBILE_APP, TA_CLOUD, 2.5, 0.5),
    (USER_CLOUD, TA_CLOUD, 2.5, 0.5),
    (USER_CLOUD, VENDOR_CLOUD, 1.5, 0.4),
)

# The trigger-action cloud also calls vendor clouds directly (Hue, Google, the
# sprinkler's cloud); no row covers that, so it reuses the cloud <-> TA row.
DEFAULT_ALIASES = {
    frozenset({TA_CLOUD, VENDOR_CLOUD}): frozenset({USER_CLOUD, TA_CLOUD}),
}

_INVENTORY: Tuple[Tuple[str, str, Optional[str]], ...] = (
    # event sources
    ("mobile-app", MOBILE_APP, None),
    ("ifttt-app", MOBILE_APP, "ifttt"),
    ("voice-assistant", VOICE_ASSISTANT, "google"),
    ("temp-sensor", SENSOR, None),
    ("motion-sensor", SENSOR, None),
    ("smoke-sensor", SENSOR, None),
    ("presence-sensor-1", SENSOR, None),
    ("presence-sensor-2", SENSOR, None),
    ("doorbell", SENSOR, None),
    ("door-contact", SENSOR, None),
    ("window-contact", SENSOR, None),
    ("power-meter", SENSOR, None),
    ("lock-button", SENSOR, None),
    ("hue-button", SENSOR, None),
    ("shade-switch", SENSOR, None),
    ("sprinkler-button", SENSOR, None),
    # actuators
    ("smart-oven", ACTUATOR, None),
    ("smart-plug", ACTUATOR, None),
    ("garage-door", ACTUATOR, None),
    ("garage-lock", ACTUATOR, None),
    ("window", ACTUATOR, None),
    ("smart-camera", ACTUATOR, None),
    ("smart-fan", ACTUATOR, None),
    ("hue-light", ACTUATOR, "hue"),
    ("smart-alarm", ACTUATOR, None),
    ("smart-lock", ACTUATOR, None),
    ("smart-thermostat", ACTUATOR, None),
    ("window-shade", ACTUATOR, None),
    ("sprinkler-valve", ACTUATOR, None),
    ("irrigation-system", ACTUATOR, None),
    # infrastructure
    ("edge", EDGE, None),
    ("user-cloud", USER_CLOUD, None),
    ("ifttt-cloud", TA_CLOUD, "ifttt"),
    ("google-cloud", VENDOR_CLOUD, "google"),
    ("hue-cloud", VENDOR_CLOUD, "hue"),
    ("sprinkler-cloud", VENDOR_CLOUD, "sprinkler"),
)


def default_links() -> List[LinkDelayModel]:
    return [LinkDelayModel((a, b), mean, std) for a, b, mean, std in DELAY_TABLE]


def default_topology() -> Tuple[List[ComponentSpec], List[LinkDelayModel]]:
    """Device inventory used by the built-in apps plus the eight delay rows."""
    components = [ComponentSpec(cid, kind, vendor) for cid, kind, vendor in _INVENTORY]
    return components, default_links()


def build_topology(
    components: Optional[List[ComponentSpec]] = None,
    links: Optional[List[LinkDelayModel]] = None,
    aliases: Optional[Dict[frozenset, frozenset]] = None,
) -> Topology:
    dc, dl = default_topology()
    return Topology(
        components if components is not None else dc,
        links if links is not None else dl,
        dict(DEFAULT_ALIASES) if aliases is None else aliases,
    )


@dataclass(frozen=True)
class Stimulus:
    source: str
    event: str
    value: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """What to simulate: installed apps plus a periodic stimulus schedule.

    The ``stimuli`` pattern is cycled to produce ``n_events`` events spaced
    ``period`` seconds apart. ``events`` replaces the pattern when given.
    """

    name: str
    apps: Tuple[str, ...]
    stimuli: Tuple[Stimulus, ...] = ()
    n_events: int = 50
    period: float = 0.25
    seed: int = 0
    experiment: Optional[int] = None
    thresholds: Tuple[Tuple[str, float], ...] = ()
    relations: Tuple[TemporalRelation, ...] = ()
    start: float = 0.0
    links: Tuple[LinkDelayModel, ...] = ()
    events: Tuple[EventSpec, ...] = ()

    def __post_init__(self) -> None:
        for name in ("apps", "stimuli", "relations", "links", "events"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        th = self.thresholds
        if isinstance(th, dict):
            th = th.items()
        object.__setattr__(self, "thresholds", tuple(sorted((str(k), float(v)) for k, v in th)))
        if not self.period > 0:
            raise ConfigurationError(f"scenario {self.name}: period must be > 0")
        if self.n_events < 1:
            raise ConfigurationError(f"scenario {self.name}: n_events must be >= 1")
        if self.start < 0:
            raise ConfigurationError(f"scenario {self.name}: start must be >= 0")
        if not self.events and not self.stimuli:
            raise ConfigurationError(f"scenario {self.name}: no stimuli or events")

    def schedule(self) -> List[EventSpec]:
        if self.events:
            return sorted(self.events, key=lambda e: (e.ts, e.id))
        out = []
        for i in range(self.n_events):
            s = self.stimuli[i % len(self.stimuli)]
            ts = round(self.start + i * self.period, 6)
            out.append(EventSpec(s.source, s.event, s.value, ts, i))
        return out

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)
