"""Command line entry point: simulate, analyze, experiment."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import detect, engine, io
from .apps import builtin_relations
from .experiments import DEFAULT_SEEDS, PERIODS, RELATION, run_experiment
from .model import AnalysisError, ConfigurationError

OUT_ENV = "IOTORDER_OUT"

log = logging.getLogger("iotorder")


def _out_dir(arg: Optional[str]) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _periods(text: str) -> List[float]:
    try:
        vals = [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad period list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("periods must be positive")
    return vals


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario, topology, catalog = io.load_setup(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    trace = engine.run(scenario, topology, catalog)
    out = _out_dir(args.out) / f"{scenario.name}-seed{scenario.seed}.jsonl"
    io.write_trace(trace, out)
    print(f"{len(trace.messages)} messages, {len(trace.unmatched)} unmatched events -> {out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    trace = io.read_trace(args.trace)
    kinds = [k.upper() for k in _csv_list(args.detectors)]
    for k in kinds:
        if k not in detect.KINDS:
            raise ConfigurationError(f"--detectors: unknown detector {k.lower()!r}")
    relations = io.load_relations(args.relations) if args.relations else builtin_relations()
    detect.check_relations(relations)
    group = _csv_list(args.apps) if args.apps else None
    report = detect.analyze(trace, kinds, relations, args.rate_mode, group)
    out = _out_dir(args.out)
    stem = Path(args.trace).stem
    io.write_report(report, out / f"{stem}-report.json", "json")
    io.write_report(report, out / f"{stem}-report.csv", "csv")
    for entity, r in report.entities.items():
        print(f"{entity:<22} {r.misordered:>5}/{r.total:<5} {r.percentage:6.2f}%")
    for k, vs in report.violations.items():
        print(f"{k}: {len(vs)} violations")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    stats = run_experiment(
        args.exp, range(args.seeds), args.periods, mode=args.rate_mode, workers=args.workers
    )
    out = _out_dir(args.out)
    io.write_report(stats, out / "stats.csv", "csv")
    io.write_report(stats, out / "stats.json", "json")
    io.write_plot_data(stats, out / "plot.json")
    for m in sorted(stats.rates):
        if m != stats.mode:
            io.write_report(stats, out / f"stats-{m}.csv", "csv", mode=m)
            io.write_plot_data(stats, out / f"plot-{m}.json", mode=m)
    for cls in stats.classes():
        print(f"{cls:<22} mean over periods {stats.mean_over_periods(cls):6.2f}%")
    if RELATION in stats.rates:
        for app in sorted({k[2] for k in stats.rates[RELATION]}):
            print(f"relation {app:<13} mean over periods {stats.mean_over_periods('actuator', app, RELATION):6.2f}%")
    print(f"results -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iotorder", description="Event/command ordering in simulated smart homes.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and write its trace")
    s.add_argument("--scenario", required=True, help="scenario JSON file")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="detect misordering in a trace")
    a.add_argument("--trace", required=True)
    a.add_argument("--detectors", default="p1,p2,p3", help="comma separated subset of p1,p2,p3")
    a.add_argument("--relations", help="relations JSON file (default: built-in relations)")
    a.add_argument("--rate-mode", choices=(detect.ADJACENT, detect.ANY), default=detect.ADJACENT)
    a.add_argument("--apps", help="restrict rates to these app ids (comma separated)")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    e = sub.add_parser("experiment", help="run a full experiment sweep")
    e.add_argument("--exp", type=int, choices=(1, 2, 3), required=True)
    e.add_argument("--seeds", type=int, default=DEFAULT_SEEDS, help="number of seeds, 0..N-1")
    e.add_argument("--periods", type=_periods, default=list(PERIODS), help="comma separated periods in seconds")
    e.add_argument("--rate-mode", choices=(detect.ADJACENT, detect.ANY), default=detect.ADJACENT)
    e.add_argument("--workers", type=int, default=None, help="worker processes")
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seeds", 1) < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigurationError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
