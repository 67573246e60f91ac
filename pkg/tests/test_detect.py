import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iotorder.detect import (
    ADJACENT,
    ANY,
    COMMAND,
    EVENT,
    KINDS,
    P1,
    P2,
    P3,
    Arrival,
    analyze,
    brute_force,
    detect,
    detect_p1,
    detect_p2,
    detect_p3,
    flag_misordered,
    misordered_rate,
    relation_rate,
)
from iotorder.model import (
    AnalysisError,
    ConfigurationError,
    EventSpec,
    MessageRecord,
    TemporalRelation,
    Trace,
    UndefinedRateError,
)
from tracegen import RELATIONS, random_trace

GARAGE = (
    TemporalRelation((("garage-lock", "unlock"), ("garage-door", "open")), "open"),
    TemporalRelation((("garage-door", "close"), ("garage-lock", "lock")), "close"),
)


def msg(i, source, actuator, command, ts, ta, t_cloud=None, action_index=0):
    hops = [("user-cloud", ts + 1.0 if t_cloud is None else t_cloud), (actuator, ta)]
    return MessageRecord(i, "R", EventSpec(source, "e", None, ts, i), actuator, command,
                         action_index=action_index, dispatch_hop=0, hops=hops, ta=ta)


def test_p1_contradicting_commands_swapped():
    trace = Trace([msg(0, "mobile-app", "smart-oven", "on", 0.25, 4.9),
                   msg(1, "mobile-app", "smart-oven", "off", 0.0, 5.1)])
    (v,) = detect_p1(trace)
    assert (v.kind, v.i, v.j, v.entity) == (P1, 0, 1, "smart-oven")


def test_p1_idempotent_commands_ignored():
    trace = Trace([msg(0, "mobile-app", "smart-oven", "on", 0.25, 4.9),
                   msg(1, "mobile-app", "smart-oven", "on", 0.0, 5.1)])
    assert detect_p1(trace) == []


def test_p2_two_sources_swapped():
    # voice turns the oven on, the app turns it off half a second later, arrivals swap
    trace = Trace([msg(0, "voice-assistant", "smart-oven", "on", 0.0, 3.0),
                   msg(1, "mobile-app", "smart-oven", "off", 0.5, 2.9)])
    (v,) = detect_p2(trace)
    assert (v.i, v.j) == (1, 0)
    assert detect_p1(trace) == []


def test_p2_same_source_goes_to_p1():
    trace = Trace([msg(0, "mobile-app", "smart-oven", "on", 0.0, 3.0),
                   msg(1, "mobile-app", "smart-oven", "off", 0.5, 2.9)])
    assert detect_p2(trace) == []
    assert len(detect_p1(trace)) == 1


def test_p3_door_opens_before_unlock():
    trace = Trace([msg(0, "mobile-app", "garage-lock", "unlock", 0.0, 3.5),
                   msg(1, "mobile-app", "garage-door", "open", 0.001, 3.0)])
    (v,) = detect_p3(trace, GARAGE)
    assert (v.i, v.j, v.entity) == (1, 0, "garage-door")


def test_p3_declared_order_respected():
    trace = Trace([msg(0, "mobile-app", "garage-lock", "unlock", 0.0, 3.0),
                   msg(1, "mobile-app", "garage-door", "open", 0.001, 3.5)])
    assert detect_p3(trace, GARAGE) == []


def test_p3_same_event_uses_step_order():
    # one click, both commands created at once: the lock must still come first
    trace = Trace([msg(0, "mobile-app", "garage-lock", "unlock", 0.0, 3.5),
                   msg(1, "mobile-app", "garage-door", "open", 0.0, 3.0, action_index=1)])
    assert [v.pair for v in detect_p3(trace, GARAGE)] == [(1, 0)]


def test_p3_unrelated_actuators_ignored():
    trace = Trace([msg(0, "mobile-app", "window", "open", 0.0, 3.5),
                   msg(1, "mobile-app", "garage-door", "open", 0.5, 3.0)])
    assert detect_p3(trace, GARAGE) == []


def test_p3_unknown_actuator_in_relation():
    rel = TemporalRelation((("moat-bridge", "raise"), ("garage-door", "open")))
    with pytest.raises(ConfigurationError, match="moat-bridge"):
        detect_p3(Trace([]), [rel])


def test_single_message_has_no_violations():
    trace = Trace([msg(0, "mobile-app", "garage-door", "open", 0.0, 3.0)])
    for kind in KINDS:
        assert detect(trace, kind, GARAGE) == []


def test_incomplete_message_rejected():
    m = msg(3, "mobile-app", "window", "open", 0.0, 1.0)
    m.ta = None
    with pytest.raises(AnalysisError, match="message 3"):
        detect_p1(Trace([m]))


@pytest.mark.parametrize("seed", range(200))
def test_detectors_match_brute_force(seed):
    rng = random.Random(seed)
    trace = random_trace(rng, rng.randint(1, 200))
    for kind in KINDS:
        assert detect(trace, kind, RELATIONS) == brute_force(trace, kind, RELATIONS)


@st.composite
def traces(draw):
    n = draw(st.integers(1, 30))
    msgs = []
    for i in range(n):
        ts = draw(st.integers(0, 6)) * 0.5
        ta = ts + draw(st.integers(0, 6)) * 0.5
        act = draw(st.sampled_from(["garage-door", "garage-lock", "window", "window-shade"]))
        msgs.append(MessageRecord(
            i, "R", EventSpec(draw(st.sampled_from(["a", "b"])), "e", None, ts, i), act,
            draw(st.sampled_from(["open", "close", "lock", "unlock"])), hops=[(act, ta)], ta=ta))
    return Trace(msgs)


@settings(max_examples=300, deadline=None)
@given(traces())
def test_detectors_match_brute_force_property(trace):
    for kind in KINDS:
        assert detect(trace, kind, RELATIONS) == brute_force(trace, kind, RELATIONS)


def test_unknown_predicate_rejected():
    trace = Trace([msg(0, "a", "window", "open", 0, 1)])
    with pytest.raises(ValueError):
        brute_force(trace, "P9")
    with pytest.raises(ValueError):
        detect(trace, "P9")


# misordered rates ------------------------------------------------------------


def test_creation_order_gives_zero_rate():
    trace = Trace([msg(i, "mobile-app", "window", "open", i * 0.5, 3.0 + i * 0.5) for i in range(10)])
    for mode in (ADJACENT, ANY):
        assert misordered_rate(trace, "window", mode) == 0.0
        assert misordered_rate(trace, "user-cloud", mode) == 0.0


def test_two_swapped_messages_give_half():
    trace = Trace([msg(0, "mobile-app", "window", "open", 0.0, 5.0),
                   msg(1, "mobile-app", "window", "close", 0.25, 4.0)])
    for mode in (ADJACENT, ANY):
        assert misordered_rate(trace, "window", mode) == 50.0


def test_modes_differ_on_a_late_straggler():
    # arrival order 2 0 1: adjacent flags only 0, any also flags 1 (it trails 2)
    stream = [Arrival("x", COMMAND, t, (o, 0), ("R",)) for t, o in [(1.0, 2), (2.0, 0), (3.0, 1)]]
    assert sum(b for _, b in flag_misordered(stream, ADJACENT)) == 1
    assert sum(b for _, b in flag_misordered(stream, ANY)) == 2


def test_rate_phase_filter():
    trace = Trace([msg(0, "mobile-app", "window", "open", 0.0, 5.0, t_cloud=2.0),
                   msg(1, "mobile-app", "window", "close", 0.25, 4.0, t_cloud=1.0)])
    assert misordered_rate(trace, "user-cloud", phase=EVENT) == 50.0
    with pytest.raises(UndefinedRateError):
        misordered_rate(trace, "user-cloud", phase=COMMAND)


def test_zero_arrivals_is_undefined():
    trace = Trace([msg(0, "mobile-app", "window", "open", 0.0, 5.0)])
    with pytest.raises(UndefinedRateError):
        misordered_rate(trace, "garage-door")


def test_empty_trace_is_an_error():
    with pytest.raises(AnalysisError):
        misordered_rate(Trace([]), "window")
    with pytest.raises(AnalysisError):
        analyze(Trace([]))


def test_relation_rate_counts_involved_commands():
    trace = Trace([msg(0, "mobile-app", "garage-lock", "unlock", 0.0, 3.5),
                   msg(1, "mobile-app", "garage-door", "open", 0.0, 3.0, action_index=1),
                   msg(2, "mobile-app", "garage-door", "close", 1.0, 5.0),
                   msg(3, "mobile-app", "garage-lock", "lock", 1.0, 6.0, action_index=1)])
    assert relation_rate(trace, GARAGE) == 50.0


def test_analyze_collects_all_detectors():
    trace = Trace([msg(0, "mobile-app", "garage-lock", "unlock", 0.0, 3.5),
                   msg(1, "mobile-app", "garage-door", "open", 0.0, 3.0, action_index=1)])
    report = analyze(trace, KINDS, GARAGE, ADJACENT)
    assert sorted(report.violations) == sorted(KINDS)
    assert len(report.violations[P3]) == 1 and report.violations[P2] == []
    assert set(report.entities) == {"user-cloud", "garage-lock", "garage-door"}
    assert report.alt_entities.keys() == report.entities.keys()
