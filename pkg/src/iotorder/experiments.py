"""Scenario generation and statistics for the three misordering experiments."""

from __future__ import annotations

import math
import statistics
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import engine
from .apps import EXP1, builtin_relations, tagged
from .detect import ADJACENT, ANY, detect_p3, flagged_arrivals
from .model import (
    ACTUATOR,
    EDGE,
    TA_CLOUD,
    USER_CLOUD,
    VENDOR_CLOUD,
    ConfigurationError,
    ScenarioConfig,
    Stimulus,
    Topology,
    build_topology,
)

N_EVENTS = 50
PERIODS = tuple(0.25 * k for k in range(1, 9))
DEFAULT_SEEDS = 20

# entity classes, in report order
USER_CLASS = "user-cloud"
TA_CLASS = "trigger-action-cloud"
VENDOR_CLASS = "vendor-cloud"
EDGE_CLASS = "edge"
ACTUATOR_CLASS = "actuator"
CLASS_OF_KIND = {
    USER_CLOUD: USER_CLASS,
    TA_CLOUD: TA_CLASS,
    VENDOR_CLOUD: VENDOR_CLASS,
    EDGE: EDGE_CLASS,
    ACTUATOR: ACTUATOR_CLASS,
}
CLASSES = (USER_CLASS, TA_CLASS, VENDOR_CLASS, EDGE_CLASS, ACTUATOR_CLASS)
ALL = "ALL"
# share of relation-covered commands involved in a P3 inversion (actuator class only)
RELATION = "relation"

# Two stimuli per app that make it issue contradicting commands (or, for apps
# with a single command, the firing stimulus and a non-firing one).
VARIANTS: Dict[str, Tuple[Stimulus, Stimulus]] = {
    "M1": (Stimulus("mobile-app", "oven-on"), Stimulus("mobile-app", "oven-off")),
    "M2": (Stimulus("mobile-app", "plug-on"), Stimulus("mobile-app", "plug-off")),
    "M3": (Stimulus("mobile-app", "open-garage"), Stimulus("mobile-app", "close-garage")),
    "M4": (Stimulus("mobile-app", "open-window"), Stimulus("mobile-app", "close-window")),
    "TA1": (Stimulus("temp-sensor", "temperature", 35.0), Stimulus("temp-sensor", "temperature", 25.0)),
    "TA2": (Stimulus("motion-sensor", "motion-active"), Stimulus("motion-sensor", "motion-inactive")),
    "TA3": (Stimulus("temp-sensor", "temperature", 35.0), Stimulus("temp-sensor", "temperature", 25.0)),
    "TA4": (Stimulus("doorbell", "ring"), Stimulus("doorbell", "ring")),
    "TA5": (Stimulus("motion-sensor", "motion-active"), Stimulus("motion-sensor", "motion-active")),
    "TA6": (Stimulus("ifttt-app", "thermostat-set"), Stimulus("ifttt-app", "thermostat-clear")),
    "IoT1": (Stimulus("smoke-sensor", "smoke-detected"), Stimulus("smoke-sensor", "smoke-clear")),
    "IoT2": (Stimulus("temp-sensor", "temperature", 35.0), Stimulus("temp-sensor", "temperature", 25.0)),
    "IoT3": (Stimulus("presence-sensor-1", "not-present"), Stimulus("presence-sensor-2", "present")),
    "IoT4": (Stimulus("motion-sensor", "motion-active"), Stimulus("motion-sensor", "motion-inactive")),
    "IoT5": (Stimulus("voice-assistant", "unlock-door"), Stimulus("voice-assistant", "lock-door")),
    "IoT6": (Stimulus("lock-button", "hold"), Stimulus("lock-button", "push")),
    "IoT7": (Stimulus("hue-button", "click", 1.0), Stimulus("hue-button", "click", 0.0)),
    "IoT8": (Stimulus("door-contact", "contact-open"), Stimulus("door-contact", "contact-closed")),
    "IoT9": (Stimulus("power-meter", "power", 50.0), Stimulus("power-meter", "power", 150.0)),
    "IoT10": (Stimulus("window-contact", "contact-closed"), Stimulus("window-contact", "contact-open")),
    "IoT11": (Stimulus("motion-sensor", "motion-active"), Stimulus("motion-sensor", "motion-inactive")),
    "IoT12": (Stimulus("shade-switch", "switch", 1.0), Stimulus("shade-switch", "switch", 0.0)),
    "IoT13": (Stimulus("sprinkler-button", "push", 1.0), Stimulus("sprinkler-button", "push", 0.0)),
}

# Apps sharing an actuator, ordered so consecutive stimuli alternate between
# the two contradicting commands.
EXP2_GROUPS: Dict[str, Tuple[str, ...]] = {
    "smart-alarm": ("IoT3",),
    "smart-lock": ("IoT4", "IoT5", "IoT6"),
    "hue-light": ("TA4", "IoT7", "TA5", "IoT8"),
    "smart-plug": ("M2", "IoT9"),
    "smart-thermostat": ("TA6", "IoT10", "IoT11"),
}

# Stimuli in correct temporal order for each group of related actuators.
EXP3_GROUPS: Dict[str, Tuple[Tuple[str, ...], Tuple[Stimulus, ...], Tuple[str, ...]]] = {
    "garage": (
        ("M3",),
        (Stimulus("mobile-app", "open-garage"), Stimulus("mobile-app", "close-garage")),
        ("garage-open", "garage-close"),
    ),
    "sprinkler": (
        ("IoT13",),
        (
            Stimulus("sprinkler-button", "push", 1.0),
            Stimulus("sprinkler-button", "hold", 1.0),
            Stimulus("sprinkler-button", "hold", 0.0),
            Stimulus("sprinkler-button", "push", 0.0),
        ),
        ("sprinkler-start", "sprinkler-stop"),
    ),
    "window": (
        ("M4", "IoT12"),
        (
            Stimulus("shade-switch", "switch", 1.0),
            Stimulus("mobile-app", "open-window"),
            Stimulus("mobile-app", "close-window"),
            Stimulus("shade-switch", "switch", 0.0),
        ),
        ("window-open", "window-close"),
    ),
}


def exp1_apps() -> List[str]:
    return [r.id for r in tagged(EXP1)]


def single_app_scenario(
    app: str, period: float, seed: int = 0, n_events: int = N_EVENTS, experiment: Optional[int] = None
) -> ScenarioConfig:
    """One app driven by its two stimuli, alternating, ``n_events`` in total."""
    if app not in VARIANTS:
        raise ConfigurationError(f"no stimulus pattern for app {app!r}")
    return ScenarioConfig(
        name=f"exp{experiment or 'x'}-{app}-p{period:g}",
        apps=(app,),
        stimuli=VARIANTS[app],
        n_events=n_events,
        period=period,
        seed=seed,
        experiment=experiment,
    )


def group_scenario(
    name: str, apps: Sequence[str], period: float, seed: int = 0, n_events: int = N_EVENTS
) -> ScenarioConfig:
    """Round-robin over ``apps``; the k-th stimulus uses variant k mod 2."""
    k = len(apps)
    sources = {s.source for a in apps for s in VARIANTS[a]}
    cycle = k * 2 // math.gcd(k, 2)
    stimuli = tuple(VARIANTS[apps[i % k]][i % 2] for i in range(cycle))
    return ScenarioConfig(
        name=f"exp2-{name}-p{period:g}",
        apps=tuple(apps),
        stimuli=stimuli,
        n_events=n_events * max(k, len(sources)),
        period=period,
        seed=seed,
        experiment=2,
    )


def generate_scenario(exp: int, period: float, seed: int = 0, n_events: int = N_EVENTS) -> List[ScenarioConfig]:
    """Scenarios making up one experiment at one period.

    Experiment 1 runs each app alone, experiment 2 one scenario per shared
    actuator, experiment 3 one scenario per group of related actuators.
    """
    if exp == 1:
        return [single_app_scenario(a, period, seed, n_events, experiment=1) for a in exp1_apps()]
    if exp == 2:
        return [group_scenario(name, apps, period, seed, n_events) for name, apps in EXP2_GROUPS.items()]
    if exp == 3:
        rels = {r.name: r for r in builtin_relations()}
        out = []
        for name, (apps, stimuli, rel_names) in EXP3_GROUPS.items():
            sources = {s.source for s in stimuli}
            out.append(
                ScenarioConfig(
                    name=f"exp3-{name}-p{period:g}",
                    apps=apps,
                    stimuli=stimuli,
                    n_events=n_events * len(sources),
                    period=period,
                    seed=seed,
                    experiment=3,
                    relations=tuple(rels[n] for n in rel_names),
                )
            )
        return out
    raise ConfigurationError(f"unknown experiment {exp!r}")


def pair_swap_probability(var_i: float, var_j: float, gap: float) -> float:
    """Chance that the later of two messages ``gap`` seconds apart arrives first.

    Path delays are independent Gaussians with total variances ``var_i`` and
    ``var_j`` and equal means, so the arrival difference is
    Normal(gap, var_i + var_j).
    """
    if var_i < 0 or var_j < 0:
        raise ValueError("variances must be >= 0")
    total = var_i + var_j
    if total == 0:
        if gap > 0:
            return 0.0
        raise ValueError("at least one variance must be positive")
    return 0.5 * math.erfc(gap / math.sqrt(2.0 * total))


def path_variance(path: Sequence[str], topology: Optional[Topology] = None) -> float:
    topo = topology or build_topology()
    return sum(topo.link(a, b).std ** 2 for a, b in zip(path, path[1:]))


# running and aggregation ---------------------------------------------------


@dataclass(frozen=True)
class CellStats:
    n: int
    min: float
    max: float
    mean: float
    median: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "CellStats":
        vals = sorted(values)
        return cls(len(vals), vals[0], vals[-1], statistics.fmean(vals), statistics.median(vals))


@dataclass
class ExperimentStats:
    """Per-app misordered percentages for every (period, entity class).

    ``rates[mode][(period, entity_class, app)]`` lists one percentage per
    (scenario, seed) in which the app had arrivals of that class.
    """

    experiment: int
    mode: str
    periods: Tuple[float, ...]
    seeds: Tuple[int, ...]
    rates: Dict[str, Dict[Tuple[float, str, str], List[float]]] = field(default_factory=dict)

    def apps(self) -> List[str]:
        return sorted({k[2] for k in self.rates[self.mode]})

    def classes(self) -> List[str]:
        present = {k[1] for k in self.rates[self.mode]}
        return [c for c in CLASSES if c in present]

    def values(self, period: float, entity_class: str, app: str = ALL, mode: Optional[str] = None) -> List[float]:
        table = self.rates[mode or self.mode]
        if app != ALL:
            return list(table.get((period, entity_class, app), []))
        return [v for (p, c, _), vs in sorted(table.items()) if p == period and c == entity_class for v in vs]

    def summary(self, period: float, entity_class: str, app: str = ALL, mode: Optional[str] = None) -> Optional[CellStats]:
        vals = self.values(period, entity_class, app, mode)
        return CellStats.of(vals) if vals else None

    def mean_over_periods(self, entity_class: str, app: str = ALL, mode: Optional[str] = None) -> float:
        vals = [v for p in self.periods for v in self.values(p, entity_class, app, mode)]
        return statistics.fmean(vals)


def entity_class(kind: str) -> Optional[str]:
    return CLASS_OF_KIND.get(kind)


def scenario_rates(
    scenario: ScenarioConfig, topology: Optional[Topology] = None, modes: Sequence[str] = (ADJACENT, ANY)
) -> Dict[str, Dict[Tuple[str, str], float]]:
    """Run one scenario; per mode, the percentage for each (entity class, app).

    Cloud classes count an app's first visit to the cloud only, so a command
    returning through the user cloud is not mixed with the event arrivals.
    """
    topo = topology or build_topology()
    trace = engine.run(scenario, topo)
    kinds = topo.kinds
    out: Dict[str, Dict[Tuple[str, str], float]] = {}
    for mode in modes:
        counts: Dict[Tuple[str, str], List[int]] = defaultdict(lambda: [0, 0])
        for a, bad in flagged_arrivals(trace, scenario.apps, mode):
            cls = entity_class(kinds[a.entity])
            if cls is None:
                continue
            if cls in (USER_CLASS, TA_CLASS, VENDOR_CLASS) and a.visit > 0:
                continue
            for app in a.rules:
                c = counts[(cls, app)]
                c[0] += 1
                c[1] += bad
        out[mode] = {k: 100.0 * m / n for k, (n, m) in sorted(counts.items()) if n}
    if scenario.relations:
        involved = set()
        for v in detect_p3(trace, scenario.relations, topo):
            involved.update(v.pair)
        counts = defaultdict(lambda: [0, 0])
        for m in trace.messages:
            if any(r.covers(m.actuator, m.command) for r in scenario.relations):
                c = counts[(ACTUATOR_CLASS, m.rule)]
                c[0] += 1
                c[1] += m.msg_id in involved
        out[RELATION] = {k: 100.0 * m / n for k, (n, m) in sorted(counts.items()) if n}
    return out


def _run_cell(args):
    scenario, topology = args
    return scenario.period, scenario_rates(scenario, topology)


def run_experiment(
    exp: int,
    seeds: Iterable[int],
    periods: Iterable[float] = PERIODS,
    mode: str = ADJACENT,
    n_events: int = N_EVENTS,
    topology: Optional[Topology] = None,
    workers: Optional[int] = None,
) -> ExperimentStats:
    """Run every (scenario, period, seed) cell and collect per-app rates."""
    seeds = tuple(sorted(seeds))
    if not seeds:
        raise ValueError("at least one seed is required")
    periods = tuple(periods)
    cells = [
        (sc, topology)
        for p in periods
        for seed in seeds
        for sc in generate_scenario(exp, p, seed, n_events)
    ]
    stats = ExperimentStats(exp, mode, periods, seeds, defaultdict(lambda: defaultdict(list)))
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, cells, chunksize=8))
    else:
        results = []
        for cell in cells:
            try:
                results.append(_run_cell(cell))
            except Exception as exc:
                raise RuntimeError(f"scenario {cell[0].name} seed {cell[0].seed}: {exc}") from exc
    for period, by_mode in results:
        for m, table in by_mode.items():
            for (cls, app), rate in table.items():
                stats.rates[m][(period, cls, app)].append(rate)
    stats.rates = {m: {k: sorted(v) for k, v in sorted(t.items())} for m, t in stats.rates.items()}
    return stats
