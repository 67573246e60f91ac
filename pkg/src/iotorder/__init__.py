"""Simulation and detection of event/command misordering in smart homes."""

from .apps import builtin_catalog, builtin_relations
from .detect import analyze, brute_force, detect_p1, detect_p2, detect_p3, misordered_rate
from .engine import Simulator, run, sample_hop_delay
from .experiments import generate_scenario, pair_swap_probability, run_experiment
from .model import (
    AnalysisError,
    AppRule,
    ConfigurationError,
    EventSpec,
    LinkDelayModel,
    MessageRecord,
    ScenarioConfig,
    TemporalRelation,
    Topology,
    Trace,
    UndefinedRateError,
    build_topology,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisError", "AppRule", "ConfigurationError", "EventSpec", "LinkDelayModel", "MessageRecord",
    "ScenarioConfig", "Simulator", "TemporalRelation", "Topology", "Trace", "UndefinedRateError",
    "analyze", "brute_force", "build_topology", "builtin_catalog", "builtin_relations",
    "detect_p1", "detect_p2", "detect_p3", "generate_scenario", "misordered_rate", "pair_swap_probability",
    "run", "run_experiment", "sample_hop_delay",
]
