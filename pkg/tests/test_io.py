import json

import pytest

from iotorder import io
from iotorder.apps import builtin_catalog, builtin_relations
from iotorder.detect import analyze
from iotorder.engine import run
from iotorder.experiments import run_experiment, single_app_scenario
from iotorder.model import ConfigurationError, EventSpec, ScenarioConfig, Trace


@pytest.fixture(scope="module")
def three_message_trace():
    sc = ScenarioConfig("m3", ("M3", "IoT2"), events=(
        EventSpec("mobile-app", "open-garage", None, 0.0, 0),
        EventSpec("temp-sensor", "temperature", 35.5, 0.25, 1),
        EventSpec("temp-sensor", "temperature", 20.0, 0.5, 2),
    ), seed=9)
    return run(sc)


def test_trace_round_trip(three_message_trace, tmp_path):
    assert len(three_message_trace.messages) == 3
    assert len(three_message_trace.unmatched) == 1
    path = tmp_path / "t.jsonl"
    io.write_trace(three_message_trace, path)
    assert io.read_trace(path) == three_message_trace


def test_trace_lines_sorted_by_arrival(three_message_trace):
    lines = io.dumps_trace(three_message_trace).splitlines()
    header = json.loads(lines[0])
    assert header["type"] == "header" and header["seed"] == 9 and header["messages"] == 3
    times = [json.loads(l)["t"] for l in lines[1:]]
    assert times == sorted(times)
    unmatched = [json.loads(l) for l in lines[1:] if json.loads(l)["type"] == "event"]
    assert unmatched and all(u["listeners"] == ["IoT2"] for u in unmatched)


def test_trace_with_arbitrary_floats_round_trips():
    sc = single_app_scenario("M1", 0.3, seed=1, n_events=5)
    trace = run(sc)
    trace.messages[0].hops[-1] = (trace.messages[0].hops[-1][0], 1 / 3)
    trace.messages[0].ta = 1 / 3
    assert io.loads_trace(io.dumps_trace(trace)) == trace


def test_empty_trace_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with pytest.raises(ConfigurationError, match="empty trace"):
        io.read_trace(p)


def test_trace_without_header(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"type": "hop"}\n')
    with pytest.raises(ConfigurationError, match="header"):
        io.read_trace(p)


def test_trace_bad_line_is_located(tmp_path, three_message_trace):
    text = io.dumps_trace(three_message_trace).splitlines()
    text[2] = "{not json"
    p = tmp_path / "t.jsonl"
    p.write_text("\n".join(text))
    with pytest.raises(ConfigurationError, match="line 3"):
        io.read_trace(p)


def test_scenario_round_trip(tmp_path):
    sc = ScenarioConfig("s", ("IoT2", "M3"), single_app_scenario("IoT2", 0.5).stimuli, n_events=7, period=0.5,
                        seed=3, thresholds={"IoT2": 28}, relations=tuple(builtin_relations()[:2]))
    p = tmp_path / "s.json"
    io.write_scenario(sc, p)
    assert io.load_scenario(p) == sc


@pytest.mark.parametrize(
    "doc,field",
    [
        ({"name": "x", "apps": ["M4"], "period": "fast", "stimuli": [{"source": "mobile-app", "event": "e"}]}, "period"),
        ({"name": "x", "stimuli": [{"source": "mobile-app", "event": "e"}]}, "apps"),
        ({"name": "x", "apps": ["M4"], "stimuli": [{"source": "mobile-app"}]}, "event"),
        ({"name": "x", "apps": ["M4"], "n_events": 2.5, "stimuli": [{"source": "a", "event": "e"}]}, "n_events"),
        ({"schema_version": 7, "name": "x", "apps": ["M4"]}, "schema_version"),
    ],
)
def test_malformed_scenario_names_field(tmp_path, doc, field):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ConfigurationError, match=f"'{field}'"):
        io.load_scenario(p)


def test_scenario_json_syntax_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": "x",\n  "apps": [M4]\n}')
    with pytest.raises(ConfigurationError, match="line 3"):
        io.load_scenario(p)


def test_rules_round_trip(tmp_path):
    p = tmp_path / "rules.json"
    io.write_rules(builtin_catalog(), p)
    assert io.load_rules(p) == builtin_catalog()


def test_setup_overrides_topology_and_rules(tmp_path):
    doc = {
        "name": "custom",
        "apps": ["X"],
        "stimuli": [{"source": "mobile-app", "event": "go"}],
        "n_events": 3,
        "topology": {"links": [{"endpoints": ["mobile-app", "user-iot-cloud"], "mean": 0.5, "std": 0.0}]},
        "rules": [{"id": "X", "branches": [{"trigger": {"source": "mobile-app", "event": "go"},
                                            "actions": [{"actuator": "window", "command": "open",
                                                         "path": ["mobile-app", "user-cloud", "edge", "window"]}]}]}],
    }
    p = tmp_path / "setup.json"
    p.write_text(json.dumps(doc))
    sc, topo, catalog = io.load_setup(p)
    assert topo.link("mobile-app", "user-cloud").mean == 0.5
    assert topo.link("edge", "user-cloud").mean == 1.5
    trace = run(sc, topo, catalog)
    assert [m.hops[0][1] for m in trace.messages] == [0.5, 0.75, 1.0]


def test_topology_round_trip():
    from iotorder.model import build_topology
    topo = build_topology()
    again = io.topology_from_dict(io.topology_to_dict(topo))
    assert again.kinds == topo.kinds
    assert again.link("ifttt-cloud", "hue-cloud") == topo.link("ifttt-cloud", "hue-cloud")


def test_stats_csv_header_and_determinism(tmp_path):
    stats = run_experiment(1, seeds=[0, 1], periods=(0.25, 0.5))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    io.write_report(stats, a)
    io.write_report(stats, b)
    lines = a.read_text().splitlines()
    assert lines[0] == "period,entity,app,min,max,mean,median"
    assert a.read_bytes() == b.read_bytes()
    assert any(l.startswith("0.25,user-cloud,ALL,") for l in lines)


def test_stats_json_and_plot_series(tmp_path):
    stats = run_experiment(3, seeds=[0], periods=(0.25, 0.5))
    io.write_report(stats, tmp_path / "s.json", "json")
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["experiment"] == 3 and "relation" in doc["modes"]
    series = io.plot_series(stats)["series"]["actuator"]
    assert series["period"] == [0.25, 0.5]
    assert all(lo <= mid <= hi for lo, mid, hi in zip(series["min"], series["median"], series["max"]))


def test_analysis_report_outputs(tmp_path, three_message_trace):
    report = analyze(three_message_trace, relations=builtin_relations())
    io.write_report(report, tmp_path / "r.csv")
    io.write_report(report, tmp_path / "r.json", "json")
    assert (tmp_path / "r.csv").read_text().startswith("entity,total,misordered,percentage")
    assert set(json.loads((tmp_path / "r.json").read_text())["violations"]) == {"P1", "P2", "P3"}
    with pytest.raises(ValueError):
        io.write_report(report, tmp_path / "r.xml", "xml")
    with pytest.raises(TypeError):
        io.write_report(Trace([]), tmp_path / "r.csv")
