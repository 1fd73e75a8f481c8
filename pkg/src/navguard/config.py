"""TOML scenario files.

Sections ``[scenario]``, ``[sensor]``, ``[attack]``, ``[filter]``,
``[detector]`` and ``[controller]``; see ``configs/reference.toml`` for
every key. A missing ``[attack]`` section means an attack-free run.
"""
from __future__ import annotations

import sys
from importlib import resources

from .detector import CusumConfig
from .errors import ConfigInvalid
from .scenario import FilterConfig, ScenarioConfig
from .sensors import AttackSpec, SensorSuiteConfig, single_attack
from .vehicle import MEAS_NAMES, ControllerConfig, Waypoint

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("scenario", "sensor", "attack", "filter", "detector", "controller")
_KEYS = {
    "scenario": {"duration", "T", "seed", "route", "start", "capture_radius"},
    "sensor": {"noise_std", "bias"},
    "attack": {"channel", "start_time", "magnitude", "profile", "slope"},
    "filter": {"Q", "R", "P0"},
    "detector": {"calibration_len", "threshold_scale", "drift", "mode", "channels", "weights"},
    "controller": {"k_heading", "k_speed", "v_max", "yaw_rate_max", "k_accel", "accel_max"},
}


def _channel(value):
    if isinstance(value, str):
        if value not in MEAS_NAMES:
            raise ValueError(f"unknown channel name {value!r}; expected one of {MEAS_NAMES}")
        return MEAS_NAMES.index(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"channel must be an index or a name, got {value!r}")
    return value


def _route(raw, default_radius):
    route = []
    for i, wp in enumerate(raw):
        if isinstance(wp, dict):
            route.append(Waypoint(float(wp["x"]), float(wp["y"]),
                                  float(wp.get("capture_radius", default_radius))))
        elif len(wp) in (2, 3):
            radius = float(wp[2]) if len(wp) == 3 else default_radius
            route.append(Waypoint(float(wp[0]), float(wp[1]), radius))
        else:
            raise ValueError(f"waypoint {i} must be [x, y] or [x, y, capture_radius]")
    return tuple(route)


def _build(problems, section, factory):
    try:
        return factory()
    except ConfigInvalid as exc:
        problems.extend(exc.problems)
    except (ValueError, TypeError, KeyError) as exc:
        problems.append(f"[{section}] {exc}")
    return None


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a ScenarioConfig, reporting every invalid field at once."""
    problems = []
    for name in doc:
        if name not in SECTIONS:
            problems.append(f"unknown section [{name}]")
    for name, allowed in _KEYS.items():
        entries = doc.get(name, {})
        for table in entries if isinstance(entries, list) else [entries]:
            if not isinstance(table, dict):
                problems.append(f"[{name}] must be a table")
                continue
            for key in sorted(set(table) - allowed):
                problems.append(f"[{name}] unknown key {key!r}")
    if problems:
        raise ConfigInvalid(problems)

    sc = doc.get("scenario", {})
    if "duration" not in sc:
        problems.append("[scenario] duration is required")
    if "route" not in sc:
        problems.append("[scenario] route is required")

    sensor = _build(problems, "sensor", lambda: SensorSuiteConfig(
        **{k: v for k, v in doc.get("sensor", {}).items()}))

    def attack():
        raw = doc.get("attack")
        tables = raw if isinstance(raw, list) else ([raw] if raw else [])
        specs = [AttackSpec(**{**t, "channel": _channel(t.get("channel"))}) for t in tables]
        return single_attack(specs)

    attack_spec = _build(problems, "attack", attack)
    filt = _build(problems, "filter", lambda: FilterConfig(**doc.get("filter", {})))
    detector = _build(problems, "detector", lambda: CusumConfig(**{
        **doc.get("detector", {}),
        **({"channels": tuple(_channel(c) for c in doc["detector"]["channels"])}
           if "channels" in doc.get("detector", {}) else {}),
    }))
    controller = _build(problems, "controller", lambda: ControllerConfig(**doc.get("controller", {})))
    route = _build(problems, "scenario", lambda: _route(sc.get("route", ()),
                                                        float(sc.get("capture_radius", 1.0))))
    if problems:
        raise ConfigInvalid(problems)

    kwargs = dict(duration=sc["duration"], route=route, sensor=sensor, attack=attack_spec,
                  filter=filt, detector=detector, controller=controller)
    for key in ("T", "seed"):
        if key in sc:
            kwargs[key] = sc[key]
    if "start" in sc:
        kwargs["start"] = tuple(float(v) for v in sc["start"])
    cfg = _build(problems, "scenario", lambda: ScenarioConfig(**kwargs))
    if problems:
        raise ConfigInvalid(problems)
    return cfg


def loads(text: str) -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"TOML syntax error: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return loads(text)


def paper_fig6_config() -> ScenarioConfig:
    """The canned 10 m north-position spoofing scenario."""
    text = resources.files("navguard").joinpath("scenarios/paper-fig6.toml").read_text("utf-8")
    return loads(text)
