"""Built-in smart-home app catalog and trigger matching."""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence

from .model import Action, AppRule, Branch, EventSpec, Predicate, TemporalRelation, Trigger

EXP1, EXP2, EXP3 = "exp1", "exp2", "exp3"

DEFAULT_TEMP_THRESHOLD = 30.0  # °C
DEFAULT_POWER_THRESHOLD = 100.0  # W

# Message paths, source first.
_MOBILE = ("mobile-app", "user-cloud", "edge")
_LOCAL = ("edge", "user-cloud", "edge")
_VIA_IFTTT_BACK = ("edge", "user-cloud", "ifttt-cloud", "user-cloud", "edge")
_VIA_IFTTT_HUE = ("edge", "user-cloud", "ifttt-cloud", "hue-cloud")
_VIA_HUE = ("edge", "user-cloud", "hue-cloud")


def _branch(source: str, event: str, actions, middle: Sequence[str], pred: Optional[str] = None) -> Branch:
    trigger = Trigger(source, event, Predicate.parse(pred) if pred else None)
    return Branch(trigger, tuple(Action(a, c, (source, *middle, a)) for a, c in actions))


def _rule(rid: str, description: str, tags: Iterable[str], *branches: Branch) -> AppRule:
    return AppRule(rid, tuple(branches), description, frozenset(tags))


def builtin_catalog() -> List[AppRule]:
    """The 23 apps installed in the simulated house."""
    t = f"{DEFAULT_TEMP_THRESHOLD:g}"
    p = f"{DEFAULT_POWER_THRESHOLD:g}"
    return [
        _rule(
            "M1", "Start or stop the smart oven through the mobile application.", [EXP1],
            _branch("mobile-app", "oven-on", [("smart-oven", "on")], _MOBILE[1:]),
            _branch("mobile-app", "oven-off", [("smart-oven", "off")], _MOBILE[1:]),
        ),
        _rule(
            "M2", "Turn the smart plug on or off through the mobile application.", [EXP2],
            _branch("mobile-app", "plug-on", [("smart-plug", "on")], _MOBILE[1:]),
            _branch("mobile-app", "plug-off", [("smart-plug", "off")], _MOBILE[1:]),
        ),
        _rule(
            "M3", "Icon click: first unlock then open the garage door, or first close then lock it.", [EXP3],
            _branch("mobile-app", "open-garage",
                    [("garage-lock", "unlock"), ("garage-door", "open")], _MOBILE[1:]),
            _branch("mobile-app", "close-garage",
                    [("garage-door", "close"), ("garage-lock", "lock")], _MOBILE[1:]),
        ),
        _rule(
            "M4", "Close or open the window through the mobile application.", [EXP3],
            _branch("mobile-app", "open-window", [("window", "open")], _MOBILE[1:]),
            _branch("mobile-app", "close-window", [("window", "close")], _MOBILE[1:]),
        ),
        # TA1 logs to a spreadsheet hosted by the Google cloud; the cloud is the endpoint.
        _rule(
            "TA1", "Save periodic temperature measurements to Google Spreadsheet.", [],
            _branch("temp-sensor", "temperature", [("google-cloud", "log-row")],
                    ("edge", "user-cloud", "ifttt-cloud")),
        ),
        _rule(
            "TA2", "Activate the camera on motion-active, otherwise deactivate it.", [EXP1],
            _branch("motion-sensor", "motion-active", [("smart-camera", "activate")], _VIA_IFTTT_BACK),
            _branch("motion-sensor", "motion-inactive", [("smart-camera", "deactivate")], _VIA_IFTTT_BACK),
        ),
        _rule(
            "TA3", "Stop the smart fan when temperature is below a user threshold.", [EXP1],
            _branch("temp-sensor", "temperature", [("smart-fan", "off")], _VIA_IFTTT_BACK, f"<= {t}"),
        ),
        _rule(
            "TA4", "Turn on the Hue light when the doorbell rings.", [EXP2],
            _branch("doorbell", "ring", [("hue-light", "on")], _VIA_IFTTT_HUE),
        ),
        _rule(
            "TA5", "Turn on the Hue light on motion-active.", [EXP2],
            _branch("motion-sensor", "motion-active", [("hue-light", "on")], _VIA_IFTTT_HUE),
        ),
        _rule(
            "TA6", "Set or clear the thermostat through the IFTTT mobile application.", [EXP1, EXP2],
            _branch("ifttt-app", "thermostat-set", [("smart-thermostat", "on")],
                    ("ifttt-cloud", "user-cloud", "edge")),
            _branch("ifttt-app", "thermostat-clear", [("smart-thermostat", "off")],
                    ("ifttt-cloud", "user-cloud", "edge")),
        ),
        _rule(
            "IoT1", "Open the window when smoke is detected, otherwise close it.", [EXP1],
            _branch("smoke-sensor", "smoke-detected", [("window", "open")], _LOCAL),
            _branch("smoke-sensor", "smoke-clear", [("window", "close")], _LOCAL),
        ),
        _rule(
            "IoT2", "Start the smart fan when temperature is above a user threshold.", [EXP1],
            _branch("temp-sensor", "temperature", [("smart-fan", "on")], _LOCAL, f"> {t}"),
        ),
        _rule(
            "IoT3", "Activate the alarm when all users leave, otherwise deactivate it.", [EXP2],
            _branch("presence-sensor-1", "not-present", [("smart-alarm", "on")], _LOCAL),
            _branch("presence-sensor-1", "present", [("smart-alarm", "off")], _LOCAL),
            _branch("presence-sensor-2", "not-present", [("smart-alarm", "on")], _LOCAL),
            _branch("presence-sensor-2", "present", [("smart-alarm", "off")], _LOCAL),
        ),
        _rule(
            "IoT4", "Unlock the door on motion-active, otherwise lock it.", [EXP2],
            _branch("motion-sensor", "motion-active", [("smart-lock", "unlock")], _LOCAL),
            _branch("motion-sensor", "motion-inactive", [("smart-lock", "lock")], _LOCAL),
        ),
        _rule(
            "IoT5", "Lock or unlock the door through the voice assistant.", [EXP1, EXP2],
            _branch("voice-assistant", "lock-door", [("smart-lock", "lock")],
                    ("google-cloud", "user-cloud", "edge")),
            _branch("voice-assistant", "unlock-door", [("smart-lock", "unlock")],
                    ("google-cloud", "user-cloud", "edge")),
        ),
        _rule(
            "IoT6", "Lock the door when the button is pushed, unlock it when held.", [EXP2],
            _branch("lock-button", "push", [("smart-lock", "lock")], _LOCAL),
            _branch("lock-button", "hold", [("smart-lock", "unlock")], _LOCAL),
        ),
        _rule(
            "IoT7", "Turn the Hue light on and off with a button click.", [EXP1, EXP2],
            _branch("hue-button", "click", [("hue-light", "on")], _VIA_HUE, "= 1"),
            _branch("hue-button", "click", [("hue-light", "off")], _VIA_HUE, "= 0"),
        ),
        _rule(
            "IoT8", "Hue light on while the door is open, off otherwise.", [EXP2],
            _branch("door-contact", "contact-open", [("hue-light", "on")], _VIA_HUE),
            _branch("door-contact", "contact-closed", [("hue-light", "off")], _VIA_HUE),
        ),
        _rule(
            "IoT9", "Turn off the plug when power consumption exceeds a user threshold.", [EXP2],
            _branch("power-meter", "power", [("smart-plug", "off")], _LOCAL, f"> {p}"),
        ),
        _rule(
            "IoT10", "Stop the thermostat while the window is open, otherwise start it.", [EXP2],
            _branch("window-contact", "contact-open", [("smart-thermostat", "off")], _LOCAL),
            _branch("window-contact", "contact-closed", [("smart-thermostat", "on")], _LOCAL),
        ),
        _rule(
            "IoT11", "Thermostat on at motion-active, off otherwise.", [EXP2],
            _branch("motion-sensor", "motion-active", [("smart-thermostat", "on")], _LOCAL),
            _branch("motion-sensor", "motion-inactive", [("smart-thermostat", "off")], _LOCAL),
        ),
        _rule(
            "IoT12", "Close or open the window shade through the switch.", [EXP3],
            _branch("shade-switch", "switch", [("window-shade", "open")], _LOCAL, "= 1"),
            _branch("shade-switch", "switch", [("window-shade", "close")], _LOCAL, "= 0"),
        ),
        _rule(
            "IoT13", "Button push raises or lowers the sprinkler valve; hold starts or stops irrigation.",
            [EXP3],
            _branch("sprinkler-button", "push", [("sprinkler-valve", "open")],
                    ("edge", "user-cloud", "ifttt-cloud", "sprinkler-cloud", "edge"), "= 1"),
            _branch("sprinkler-button", "push", [("sprinkler-valve", "close")],
                    ("edge", "user-cloud", "ifttt-cloud", "sprinkler-cloud", "edge"), "= 0"),
            _branch("sprinkler-button", "hold", [("irrigation-system", "start")],
                    ("edge", "user-cloud", "ifttt-cloud", "sprinkler-cloud", "edge"), "= 1"),
            _branch("sprinkler-button", "hold", [("irrigation-system", "stop")],
                    ("edge", "user-cloud", "ifttt-cloud", "sprinkler-cloud", "edge"), "= 0"),
        ),
    ]


def catalog_by_id(rules: Optional[Iterable[AppRule]] = None) -> Dict[str, AppRule]:
    return {r.id: r for r in (builtin_catalog() if rules is None else rules)}


def tagged(tag: str, rules: Optional[Iterable[AppRule]] = None) -> List[AppRule]:
    return [r for r in (builtin_catalog() if rules is None else rules) if tag in r.tags]


def match_rules(event: EventSpec, rules: Iterable[AppRule]) -> List[AppRule]:
    """Rules with a branch accepting ``event``, in the given order."""
    return [r for r in rules if r.matches(event)]


def builtin_relations() -> List[TemporalRelation]:
    """Required command orderings among related actuators."""
    return [
        TemporalRelation((("garage-door", "close"), ("garage-lock", "lock")), "garage-close"),
        TemporalRelation((("garage-lock", "unlock"), ("garage-door", "open")), "garage-open"),
        TemporalRelation((("sprinkler-valve", "open"), ("irrigation-system", "start")), "sprinkler-start"),
        TemporalRelation((("irrigation-system", "stop"), ("sprinkler-valve", "close")), "sprinkler-stop"),
        TemporalRelation((("window-shade", "open"), ("window", "open")), "window-open"),
        TemporalRelation((("window", "close"), ("window-shade", "close")), "window-close"),
    ]
