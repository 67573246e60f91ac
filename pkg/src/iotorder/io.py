"""Scenario/topology/rule configuration, trace persistence and report output.

Scenarios are one JSON document. Traces are JSON lines: a header line, then
one line per hop arrival sorted by arrival time. Everything written here is
byte-for-byte deterministic for identical input.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from .apps import builtin_catalog
from .detect import MisorderReport
from .experiments import ALL, ExperimentStats
from .model import (
    Action,
    AppRule,
    Branch,
    ComponentSpec,
    ConfigurationError,
    EventRecord,
    EventSpec,
    LinkDelayModel,
    MessageRecord,
    Predicate,
    ScenarioConfig,
    Stimulus,
    TemporalRelation,
    Topology,
    Trace,
    Trigger,
    build_topology,
)

SCHEMA_VERSION = 1
PathLike = Union[str, Path]


class ConfigFileError(ConfigurationError):
    """A configuration file is malformed; the message names the field."""


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


# field access with located errors ------------------------------------------


class _Fields:
    def __init__(self, data: Any, where: str):
        if not isinstance(data, dict):
            raise ConfigFileError(f"{where}: expected an object")
        self.data = data
        self.where = where

    def _err(self, key: str, msg: str) -> ConfigFileError:
        return ConfigFileError(f"{self.where}: field '{key}': {msg}")

    def get(self, key: str, kind, default: Any = ..., allow_none: bool = False):
        if key not in self.data:
            if default is ...:
                raise self._err(key, "missing")
            return default
        v = self.data[key]
        if v is None and allow_none:
            return None
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise self._err(key, f"expected a number, got {v!r}")
            return float(v)
        if kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise self._err(key, f"expected an integer, got {v!r}")
            return v
        if not isinstance(v, kind):
            raise self._err(key, f"expected {kind.__name__}, got {type(v).__name__}")
        return v

    def sub(self, key: str, index: Optional[int] = None) -> str:
        return f"{self.where}.{key}" + (f"[{index}]" if index is not None else "")


def _read_json(path: PathLike) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def _check_version(f: _Fields) -> None:
    v = f.get("schema_version", int, SCHEMA_VERSION)
    if v != SCHEMA_VERSION:
        raise ConfigFileError(f"{f.where}: field 'schema_version': unsupported version {v}")


# rules, relations, topology -------------------------------------------------


def rule_to_dict(rule: AppRule) -> Dict[str, Any]:
    return {
        "id": rule.id,
        "description": rule.description,
        "tags": sorted(rule.tags),
        "branches": [
            {
                "trigger": {
                    "source": b.trigger.source,
                    "event": b.trigger.event,
                    "predicate": None if b.trigger.predicate is None else str(b.trigger.predicate),
                },
                "actions": [
                    {"actuator": a.actuator, "command": a.command, "path": list(a.path)} for a in b.actions
                ],
            }
            for b in rule.branches
        ],
    }


def rule_from_dict(data: Any, where: str = "rule") -> AppRule:
    f = _Fields(data, where)
    branches = []
    for i, bd in enumerate(f.get("branches", list)):
        bf = _Fields(bd, f.sub("branches", i))
        tf = _Fields(bf.get("trigger", dict), bf.sub("trigger"))
        pred = tf.get("predicate", str, None, allow_none=True)
        try:
            trigger = Trigger(tf.get("source", str), tf.get("event", str), Predicate.parse(pred) if pred else None)
            actions = []
            for j, ad in enumerate(bf.get("actions", list)):
                af = _Fields(ad, bf.sub("actions", j))
                path = af.get("path", list)
                if not all(isinstance(p, str) for p in path):
                    raise ConfigFileError(f"{af.where}: field 'path': expected component ids")
                actions.append(Action(af.get("actuator", str), af.get("command", str), tuple(path)))
            branches.append(Branch(trigger, tuple(actions)))
        except ConfigFileError:
            raise
        except ConfigurationError as exc:
            raise ConfigFileError(f"{bf.where}: {exc}") from None
    return AppRule(
        f.get("id", str),
        tuple(branches),
        f.get("description", str, ""),
        frozenset(f.get("tags", list, [])),
    )


def relation_to_dict(rel: TemporalRelation) -> Dict[str, Any]:
    return {"name": rel.name, "steps": [list(s) for s in rel.steps]}


def relation_from_dict(data: Any, where: str = "relation") -> TemporalRelation:
    f = _Fields(data, where)
    steps = f.get("steps", list)
    for i, s in enumerate(steps):
        if not (isinstance(s, list) and len(s) == 2 and all(isinstance(x, str) for x in s)):
            raise ConfigFileError(f"{f.sub('steps', i)}: expected [actuator, command]")
    try:
        return TemporalRelation(tuple(tuple(s) for s in steps), f.get("name", str, ""))
    except ConfigurationError as exc:
        raise ConfigFileError(f"{where}: {exc}") from None


def link_to_dict(link: LinkDelayModel) -> Dict[str, Any]:
    return {"endpoints": list(link.endpoint_kinds), "mean": link.mean, "std": link.std}


def link_from_dict(data: Any, where: str = "link") -> LinkDelayModel:
    f = _Fields(data, where)
    ends = f.get("endpoints", list)
    if len(ends) != 2 or not all(isinstance(e, str) for e in ends):
        raise ConfigFileError(f"{where}: field 'endpoints': expected two link classes")
    try:
        return LinkDelayModel(tuple(ends), f.get("mean", float), f.get("std", float))
    except ConfigurationError as exc:
        raise ConfigFileError(f"{where}: {exc}") from None


def topology_to_dict(topology: Topology) -> Dict[str, Any]:
    return {
        "components": [{"id": c.id, "kind": c.kind, "vendor": c.vendor} for c in topology.components],
        "links": [link_to_dict(l) for l in topology.links],
        "aliases": sorted([sorted(k), sorted(v)] for k, v in topology.aliases.items()),
    }


def topology_from_dict(data: Any, where: str = "topology") -> Topology:
    f = _Fields(data, where)
    comps = None
    if "components" in f.data:
        comps = []
        for i, cd in enumerate(f.get("components", list)):
            cf = _Fields(cd, f.sub("components", i))
            try:
                comps.append(ComponentSpec(cf.get("id", str), cf.get("kind", str), cf.get("vendor", str, None, True)))
            except ConfigFileError:
                raise
            except ConfigurationError as exc:
                raise ConfigFileError(f"{cf.where}: {exc}") from None
    links = None
    if "links" in f.data:
        links = [link_from_dict(l, f.sub("links", i)) for i, l in enumerate(f.get("links", list))]
    aliases = None
    if "aliases" in f.data:
        aliases = {}
        for i, pair in enumerate(f.get("aliases", list)):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigFileError(f"{f.sub('aliases', i)}: expected [from-pair, to-pair]")
            aliases[frozenset(pair[0])] = frozenset(pair[1])
    try:
        # listed links override matching rows of the default delay table
        topo = build_topology(comps, None, aliases)
        return topo.with_links(links) if links else topo
    except ConfigurationError as exc:
        raise ConfigFileError(f"{where}: {exc}") from None


def load_rules(path: PathLike) -> List[AppRule]:
    data = _read_json(path)
    f = _Fields(data, str(path))
    _check_version(f)
    return [rule_from_dict(r, f.sub("rules", i)) for i, r in enumerate(f.get("rules", list))]


def write_rules(rules: Iterable[AppRule], path: PathLike) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "rules": [rule_to_dict(r) for r in rules]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def load_relations(path: PathLike) -> List[TemporalRelation]:
    data = _read_json(path)
    f = _Fields(data, str(path))
    _check_version(f)
    return [relation_from_dict(r, f.sub("relations", i)) for i, r in enumerate(f.get("relations", list))]


# scenarios ------------------------------------------------------------------


def scenario_to_dict(sc: ScenarioConfig) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "apps": list(sc.apps),
        "stimuli": [{"source": s.source, "event": s.event, "value": s.value} for s in sc.stimuli],
        "n_events": sc.n_events,
        "period": sc.period,
        "seed": sc.seed,
        "experiment": sc.experiment,
        "thresholds": dict(sc.thresholds),
        "relations": [relation_to_dict(r) for r in sc.relations],
        "start": sc.start,
        "links": [link_to_dict(l) for l in sc.links],
        "events": [
            {"source": e.source, "name": e.name, "value": e.value, "ts": e.ts, "id": e.id} for e in sc.events
        ],
    }


def scenario_from_dict(data: Any, where: str = "scenario") -> ScenarioConfig:
    f = _Fields(data, where)
    _check_version(f)
    stimuli = []
    for i, sd in enumerate(f.get("stimuli", list, [])):
        sf = _Fields(sd, f.sub("stimuli", i))
        stimuli.append(Stimulus(sf.get("source", str), sf.get("event", str), sf.get("value", float, None, True)))
    events = []
    for i, ed in enumerate(f.get("events", list, [])):
        ef = _Fields(ed, f.sub("events", i))
        try:
            events.append(EventSpec(
                ef.get("source", str), ef.get("name", str), ef.get("value", float, None, True),
                ef.get("ts", float), ef.get("id", int, i),
            ))
        except ConfigFileError:
            raise
        except ConfigurationError as exc:
            raise ConfigFileError(f"{ef.where}: {exc}") from None
    thresholds = f.get("thresholds", dict, {})
    for k, v in thresholds.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigFileError(f"{f.sub('thresholds')}: field '{k}': expected a number, got {v!r}")
    apps = f.get("apps", list)
    if not all(isinstance(a, str) for a in apps):
        raise ConfigFileError(f"{where}: field 'apps': expected app ids")
    try:
        return ScenarioConfig(
            name=f.get("name", str, "scenario"),
            apps=tuple(apps),
            stimuli=tuple(stimuli),
            n_events=f.get("n_events", int, 50),
            period=f.get("period", float, 0.25),
            seed=f.get("seed", int, 0),
            experiment=f.get("experiment", int, None, allow_none=True),
            thresholds=thresholds,
            relations=tuple(relation_from_dict(r, f.sub("relations", i)) for i, r in enumerate(f.get("relations", list, []))),
            start=f.get("start", float, 0.0),
            links=tuple(link_from_dict(l, f.sub("links", i)) for i, l in enumerate(f.get("links", list, []))),
            events=tuple(events),
        )
    except ConfigFileError:
        raise
    except ConfigurationError as exc:
        raise ConfigFileError(f"{where}: {exc}") from None


def load_scenario(path: PathLike) -> ScenarioConfig:
    return scenario_from_dict(_read_json(path), str(path))


def load_setup(path: PathLike) -> Tuple[ScenarioConfig, Topology, List[AppRule]]:
    """Scenario plus the topology and rule catalog it runs against.

    Optional ``topology`` and ``rules`` sections override the defaults; rules
    listed there replace built-in apps with the same id or add new ones.
    """
    data = _read_json(path)
    sc = scenario_from_dict(data, str(path))
    f = _Fields(data, str(path))
    topo = topology_from_dict(f.get("topology", dict), f.sub("topology")) if "topology" in data else build_topology()
    catalog = {r.id: r for r in builtin_catalog()}
    for i, rd in enumerate(f.get("rules", list, [])):
        rule = rule_from_dict(rd, f.sub("rules", i))
        catalog[rule.id] = rule
    return sc, topo, list(catalog.values())


def write_scenario(sc: ScenarioConfig, path: PathLike) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# traces ---------------------------------------------------------------------


def _hop_lines(trace: Trace) -> List[Tuple[tuple, Dict[str, Any]]]:
    rows = []
    for m in trace.messages:
        e = m.event
        for h, (comp, t) in enumerate(m.hops):
            rec = {
                "type": "hop",
                "msg_id": m.msg_id,
                "rule": m.rule,
                "event_id": e.id,
                "source": e.source,
                "event": e.name,
                "value": e.value,
                "ts": e.ts,
                "actuator": m.actuator,
                "command": m.command,
                "action_index": m.action_index,
                "dispatch_hop": m.dispatch_hop,
                "hop": h,
                "component": comp,
                "t": t,
            }
            rows.append(((t, 0, m.msg_id, h), rec))
    for k, u in enumerate(trace.unmatched):
        e = u.event
        for h, (comp, t) in enumerate(u.hops):
            rec = {
                "type": "event",
                "record": k,
                "event_id": e.id,
                "source": e.source,
                "event": e.name,
                "value": e.value,
                "ts": e.ts,
                "listeners": list(u.rules),
                "hop": h,
                "component": comp,
                "t": t,
            }
            rows.append(((t, 1, k, h), rec))
    rows.sort(key=lambda r: r[0])
    return rows


def dumps_trace(trace: Trace) -> str:
    header = {
        "type": "header",
        "schema_version": SCHEMA_VERSION,
        "scenario": trace.scenario,
        "seed": trace.seed,
        "messages": len(trace.messages),
        "unmatched": len(trace.unmatched),
    }
    lines = [_dump(header)] + [_dump(rec) for _, rec in _hop_lines(trace)]
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, path: PathLike) -> None:
    Path(path).write_text(dumps_trace(trace), encoding="utf-8")


def loads_trace(text: str, where: str = "trace") -> Trace:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise ConfigFileError(f"{where}: empty trace file")
    parsed = []
    for n, line in enumerate(lines, 1):
        try:
            parsed.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"{where}: line {n}: {exc.msg}") from None
    header = _Fields(parsed[0], f"{where}: line 1")
    if header.get("type", str) != "header":
        raise ConfigFileError(f"{where}: line 1: missing header")
    _check_version(header)
    msgs: Dict[int, MessageRecord] = {}
    events: Dict[int, EventRecord] = {}
    hops: Dict[Tuple[str, int], List[Tuple[int, str, float]]] = defaultdict(list)
    for n, rec in enumerate(parsed[1:], 2):
        f = _Fields(rec, f"{where}: line {n}")
        kind = f.get("type", str)
        ev = EventSpec(f.get("source", str), f.get("event", str), f.get("value", float, None, True),
                       f.get("ts", float), f.get("event_id", int))
        if kind == "hop":
            mid = f.get("msg_id", int)
            if mid not in msgs:
                msgs[mid] = MessageRecord(
                    mid, f.get("rule", str), ev, f.get("actuator", str), f.get("command", str),
                    f.get("action_index", int), f.get("dispatch_hop", int),
                )
            hops[("m", mid)].append((f.get("hop", int), f.get("component", str), f.get("t", float)))
        elif kind == "event":
            k = f.get("record", int)
            if k not in events:
                events[k] = EventRecord(ev, [], tuple(f.get("listeners", list)))
            hops[("e", k)].append((f.get("hop", int), f.get("component", str), f.get("t", float)))
        else:
            raise ConfigFileError(f"{where}: line {n}: field 'type': unknown record type {kind!r}")
    for mid, m in msgs.items():
        m.hops = [(c, t) for _, c, t in sorted(hops[("m", mid)])]
        m.ta = m.hops[-1][1]
    for k, e in events.items():
        e.hops = [(c, t) for _, c, t in sorted(hops[("e", k)])]
    trace = Trace(
        [msgs[k] for k in sorted(msgs)],
        [events[k] for k in sorted(events)],
        header.get("scenario", str, ""),
        header.get("seed", int, None, allow_none=True),
    )
    if len(trace.messages) != header.get("messages", int, len(trace.messages)):
        raise ConfigFileError(f"{where}: header message count does not match the hop records")
    return trace


def read_trace(path: PathLike) -> Trace:
    return loads_trace(Path(path).read_text(encoding="utf-8"), str(path))


# reports --------------------------------------------------------------------

STATS_HEADER = ("period", "entity", "app", "min", "max", "mean", "median")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def stats_rows(stats: ExperimentStats, mode: Optional[str] = None) -> List[List[str]]:
    mode = mode or stats.mode
    rows = []
    apps = sorted({k[2] for k in stats.rates.get(mode, {})})
    classes = [c for c in stats.classes()] if mode == stats.mode else sorted({k[1] for k in stats.rates.get(mode, {})})
    for p in stats.periods:
        for cls in classes:
            for app in apps + [ALL]:
                s = stats.summary(p, cls, app, mode)
                if s is None:
                    continue
                rows.append([f"{p:g}", cls, app, _fmt(s.min), _fmt(s.max), _fmt(s.mean), _fmt(s.median)])
    return rows


def plot_series(stats: ExperimentStats, mode: Optional[str] = None) -> Dict[str, Any]:
    """period -> min/max/mean/median per entity class, pooled over apps."""
    mode = mode or stats.mode
    out: Dict[str, Any] = {}
    for cls in sorted({k[1] for k in stats.rates.get(mode, {})}):
        series = {"period": [], "min": [], "max": [], "mean": [], "median": []}
        for p in stats.periods:
            s = stats.summary(p, cls, ALL, mode)
            if s is None:
                continue
            series["period"].append(p)
            for key in ("min", "max", "mean", "median"):
                series[key].append(round(getattr(s, key), 4))
        out[cls] = series
    return {"experiment": stats.experiment, "mode": mode, "series": out}


def _report_dict(report: MisorderReport) -> Dict[str, Any]:
    def rates(table):
        return {
            e: {"total": r.total, "misordered": r.misordered, "percentage": round(r.percentage, 4)}
            for e, r in sorted(table.items())
        }

    return {
        "schema_version": SCHEMA_VERSION,
        "mode": report.mode,
        "entities": rates(report.entities),
        "alternate_mode_entities": rates(report.alt_entities),
        "violations": {
            k: [{"kind": v.kind, "i": v.i, "j": v.j, "entity": v.entity} for v in vs]
            for k, vs in sorted(report.violations.items())
        },
    }


def write_report(
    obj: Union[ExperimentStats, MisorderReport], path: PathLike, format: str = "csv", mode: Optional[str] = None
) -> None:
    """Write experiment statistics or an analysis report as CSV or JSON.

    ``mode`` picks which counting mode of ``ExperimentStats`` goes into a CSV.
    """
    path = Path(path)
    if format not in ("csv", "json"):
        raise ValueError(f"unknown report format {format!r}")
    if isinstance(obj, ExperimentStats):
        if format == "csv":
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(STATS_HEADER)
                w.writerows(stats_rows(obj, mode))
        else:
            doc = {
                "schema_version": SCHEMA_VERSION,
                "experiment": obj.experiment,
                "mode": obj.mode,
                "seeds": list(obj.seeds),
                "periods": list(obj.periods),
                "modes": {
                    m: [
                        {"period": p, "entity": c, "app": a, "rates": [round(v, 4) for v in vs]}
                        for (p, c, a), vs in sorted(table.items())
                    ]
                    for m, table in sorted(obj.rates.items())
                },
            }
            path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    elif isinstance(obj, MisorderReport):
        if format == "json":
            path.write_text(json.dumps(_report_dict(obj), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        else:
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("entity", "total", "misordered", "percentage", "alt_percentage"))
                for e, r in obj.entities.items():
                    alt = obj.alt_entities.get(e)
                    w.writerow((e, r.total, r.misordered, _fmt(r.percentage), _fmt(alt.percentage) if alt else ""))
    else:
        raise TypeError(f"cannot write a report for {type(obj).__name__}")


def write_plot_data(stats: ExperimentStats, path: PathLike, mode: Optional[str] = None) -> None:
    Path(path).write_text(json.dumps(plot_series(stats, mode), indent=1, sort_keys=True) + "\n", encoding="utf-8")
