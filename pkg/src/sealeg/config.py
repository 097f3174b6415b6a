"""TOML configuration: schema, validation, defaults provenance, and dumping.

Every accepted key is listed in :data:`SCHEMA` with its unit-bearing name,
type and allowed range.  Unknown keys are rejected by name.
"""
from __future__ import annotations

import copy
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import tomli

from .control import JOINTS, FeedbackSource
from .dynamics import Link
from .experiments import ExperimentConfig, Protocol
from .sea import SPRING_PRESETS, SpringMode

log = logging.getLogger("sealeg.config")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class Key:
    name: str
    kind: type | tuple  # float, int, bool, str, or a tuple of allowed strings
    get: Callable[[ExperimentConfig], Any]
    set: Callable[[ExperimentConfig, Any], None]
    lo: float | None = None
    hi: float | None = None
    lo_open: bool = False  # True: value must be strictly above ``lo``
    note: str = ""

    def describe_range(self) -> str:
        if isinstance(self.kind, tuple):
            return "one of " + ", ".join(self.kind)
        lo = "-inf" if self.lo is None else f"{self.lo:g}"
        hi = "inf" if self.hi is None else f"{self.hi:g}"
        return f"{'(' if self.lo_open else '['}{lo}, {hi}]"


SCHEMA: dict[str, Key] = {}
# keys whose defaults follow from other keys; never echoed as a fixed default
_DERIVED = set()


def _attr(path: str):
    parts = path.split(".")

    def get(cfg):
        obj = cfg
        for p in parts:
            obj = obj[p] if isinstance(obj, dict) else getattr(obj, p)
        return obj

    def set_(cfg, value):
        obj = cfg
        for p in parts[:-1]:
            obj = obj[p] if isinstance(obj, dict) else getattr(obj, p)
        if isinstance(obj, dict):
            obj[parts[-1]] = value
        else:
            setattr(obj, parts[-1], value)

    return get, set_


def _add(name, kind, path=None, lo=None, hi=None, lo_open=False, get=None, set_=None, note=""):
    if path is not None:
        get, set_ = _attr(path)
    SCHEMA[name] = Key(name, kind, get, set_, lo, hi, lo_open, note)


_PROTOCOLS = tuple(p.value for p in Protocol)
_MODES = tuple(m.value for m in SpringMode)

# experiment
_add("experiment.protocol", _PROTOCOLS,
     get=lambda c: c.protocol.value, set_=lambda c, v: setattr(c, "protocol", Protocol(v)))
_add("experiment.drop_height_m", float, "drop_height", 0.0, 1.0)
_add("experiment.duration_s", float, "duration", 0.0, 600.0, True)
_add("experiment.physics_dt_s", float, "physics_dt", 0.0, 1e-2, True)
_add("experiment.sample_rate_hz", float, "sample_rate", 0.0, 1e6, True)
_add("experiment.seed", int, "seed", 0, 2**63 - 1)
_add("experiment.hold_s", float, "hold_time", 0.0, 60.0)
for _j in JOINTS:
    _add(f"experiment.initial_pose.{_j}_deg", float, f"initial_pose.{_j}", -180.0, 180.0)
    _add(f"experiment.spring_mode.{_j}", _MODES,
         get=lambda c, j=_j: SpringMode(c.spring_modes[j]).value,
         set_=lambda c, v, j=_j: c.spring_modes.__setitem__(j, SpringMode(v)))

_add("experiment.calibration.joint", JOINTS, "calibration.joint")
_add("experiment.calibration.max_torque_nm", float, "calibration.max_torque", 0.0, 10.0, True)
_add("experiment.calibration.steps_per_quadrant", int, "calibration.steps_per_quadrant", 2, 1000)
_add("experiment.calibration.rate_tolerance_dps", float, "calibration.rate_tolerance", 0.0, 100.0, True)
_add("experiment.calibration.settle_hold_s", float, "calibration.settle_hold", 0.0, 10.0, True)
_add("experiment.calibration.max_step_time_s", float, "calibration.max_step_time", 0.0, 600.0, True)
_add("experiment.calibration.rig_inertia_kgm2", float, "calibration.rig_inertia", 0.0, 1.0, True)
_add("experiment.calibration.rig_damping_nms_per_rad", float, "calibration.rig_damping", 0.0, 100.0)
_add("experiment.calibration.physics_dt_s", float, "calibration.physics_dt", 0.0, 1e-2, True)
_DERIVED.update({"experiment.calibration.max_torque_nm",
                 "experiment.calibration.rig_damping_nms_per_rad"})

_add("experiment.natural_freq.joint", JOINTS, "natural_freq.joint")
_add("experiment.natural_freq.impulse_torque_nm", float, "natural_freq.impulse_torque", 0.0, 10.0, True)
_add("experiment.natural_freq.impulse_duration_s", float, "natural_freq.impulse_duration", 0.0, 1.0, True)
_add("experiment.natural_freq.duration_s", float, "natural_freq.duration", 0.0, 600.0, True)
_add("experiment.natural_freq.reduced", bool, "natural_freq.reduced")
_add("experiment.natural_freq.reduced_inertia_kgm2", float, "natural_freq.reduced_inertia", 0.0, 1.0, True)
_add("experiment.natural_freq.min_cycles", float, "natural_freq.min_cycles", 0.0, 100.0)
for _j in JOINTS:
    _add(f"experiment.natural_freq.{_j}.impulse_torque_nm", float, None, 0.0, 10.0, True,
         get=lambda c, j=_j: c.natural_freq.joint_impulse.get(j),
         set_=lambda c, v, j=_j: c.natural_freq.joint_impulse.__setitem__(j, v))
    _DERIVED.add(f"experiment.natural_freq.{_j}.impulse_torque_nm")

_add("experiment.sweep.workers", int, "sweep.workers", 1, 256)
# experiment.sweep.grid is a table of {config key: [values]}, handled separately

# robot
_add("robot.body_mass_kg", float, "robot.body_mass", 0.0, 100.0, True)
for _link in ("thigh", "shank", "foot"):
    _add(f"robot.{_link}.mass_kg", float, f"robot.{_link}.mass", 0.0, 100.0, True)
    _add(f"robot.{_link}.length_m", float, f"robot.{_link}.length", 0.0, 10.0, True)
    _add(f"robot.{_link}.com_m", float, f"robot.{_link}.com_offset", 0.0, 10.0)
    _add(f"robot.{_link}.inertia_kgm2", float, f"robot.{_link}.inertia", 0.0, 10.0, True)
    _DERIVED.update({f"robot.{_link}.com_m", f"robot.{_link}.inertia_kgm2"})
_add("robot.heel_offset_m", float, "robot.heel_offset", 0.0, 1.0)
_add("robot.toe_offset_m", float, "robot.toe_offset", 0.0, 1.0)
for _j in JOINTS:
    _add(f"robot.{_j}.min_deg", float, None, -180.0, 180.0,
         get=lambda c, j=_j: c.robot.joint_limits[j][0],
         set_=lambda c, v, j=_j: c.robot.joint_limits.__setitem__(j, (v, c.robot.joint_limits[j][1])))
    _add(f"robot.{_j}.max_deg", float, None, -180.0, 180.0,
         get=lambda c, j=_j: c.robot.joint_limits[j][1],
         set_=lambda c, v, j=_j: c.robot.joint_limits.__setitem__(j, (c.robot.joint_limits[j][0], v)))
_add("robot.limit_stiffness_nm_per_deg", float, "robot.limit_stiffness", 0.0, 1e4)
_add("robot.limit_damping_nms_per_deg", float, "robot.limit_damping", 0.0, 1e3)
_add("robot.gravity_mps2", float, "robot.gravity", 0.0, 100.0)

# actuators
_SEA_FIELDS = [
    ("torque_constant_nm_per_a", "torque_constant", 0.0, 100.0, True),
    ("stall_torque_nm", "stall_torque", 0.0, 100.0, True),
    ("no_load_speed_rpm", "no_load_speed", 0.0, 1e5, True),
    ("gear_ratio", "gear_ratio", 0.0, 1e5, True),
    ("backlash_deg", "backlash", 0.0, 10.0, False),
    ("back_drive_torque_nm", "back_drive_torque", 0.0, 100.0, False),
    ("spring_k_nm_per_deg", "spring_k", 0.0, 100.0, True),
    ("spring_travel_deg", "spring_travel", 0.0, 180.0, True),
    ("stop_stiffness_nm_per_deg", "stop_stiffness", 0.0, 1e4, False),
    ("stop_damping_nms_per_deg", "stop_damping", 0.0, 1e3, False),
    ("hysteresis_torque_nm", "hysteresis_torque", 0.0, 10.0, False),
    ("hysteresis_slip_deg", "hysteresis_slip", 0.0, 10.0, True),
    ("reflected_inertia_kgm2", "reflected_inertia", 0.0, 10.0, True),
    ("motor_damping_nms_per_rad", "motor_damping", 0.0, 100.0, False),
    ("sensor_resolution_deg", "sensor_resolution", 0.0, 10.0, True),
    ("stiction_velocity_dps", "stiction_velocity", 0.0, 1e3, True),
]
for _j in JOINTS:
    for _key, _field, _lo, _hi, _open in _SEA_FIELDS:
        _add(f"sea.{_j}.{_key}", float, f"sea.{_j}.{_field}", _lo, _hi, _open)
    _add(f"sea.{_j}.ideal_sensor", bool, f"sea.{_j}.ideal_sensor")
    # preset only supplies the spring_k default; it is consumed at load time
    _DERIVED.add(f"sea.{_j}.spring_k_nm_per_deg")

# contact
_add("contact.stiffness_n_per_m", float, "contact.normal_stiffness", 0.0, 1e8, True)
_add("contact.damping_ns_per_m", float, "contact.normal_damping", 0.0, 1e6)
_add("contact.friction_mu", float, "contact.friction_mu", 0.0, 10.0)
_add("contact.reg_velocity_mps", float, "contact.tangential_reg_velocity", 0.0, 10.0, True)

# control
_add("control.rate_hz", float, "controller.control_rate", 0.0, 1e6, True)
_add("control.current_limit_a", float, "controller.current_limit", 0.0, 100.0, True)
_add("control.derivative_cutoff_hz", float, "controller.derivative_cutoff", 0.0, 1e5, True)
_add("control.feedback", tuple(f.value for f in FeedbackSource),
     get=lambda c: c.controller.feedback_source.value,
     set_=lambda c, v: setattr(c.controller, "feedback_source", FeedbackSource(v)))
for _j in JOINTS:
    _add(f"control.{_j}.kp", float, f"controller.gains.{_j}.kp", 0.0, 100.0)
    _add(f"control.{_j}.kd", float, f"controller.gains.{_j}.kd", 0.0, 100.0)
    _add(f"control.{_j}.target_deg", float, f"controller.target_pose.{_j}", -180.0, 180.0)
    _DERIVED.add(f"control.{_j}.target_deg")

# output
_add("output.directory", str, "output.directory")
_add("output.settle_band_deg", float, "output.settle_band", 0.0, 180.0, True)
_add("output.settle_hold_s", float, "output.settle_hold", 0.0, 60.0, True)
_add("output.touchdown_threshold_n", float, "output.force_threshold", 0.0, 1e4, True)

_PRESET_KEYS = {f"sea.{j}.preset" for j in JOINTS} | {"sea.preset"}
_GRID_PREFIX = "experiment.sweep.grid"


def _coerce(key: Key, value):
    kind = key.kind
    name = key.name
    if isinstance(kind, tuple):
        if not isinstance(value, str) or value not in kind:
            raise ConfigError(f"{name} = {value!r}: must be {key.describe_range()}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} = {value!r}: must be true or false")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} = {value!r}: must be a string")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} = {value!r}: must be an integer in {key.describe_range()}")
    elif isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} = {value!r}: must be a number in {key.describe_range()}")
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{name} = {value!r}: must be finite")
    bad_lo = key.lo is not None and (value <= key.lo if key.lo_open else value < key.lo)
    bad_hi = key.hi is not None and value > key.hi
    if bad_lo or bad_hi:
        raise ConfigError(f"{name} = {value!r}: outside allowed range {key.describe_range()}")
    return value


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        name = f"{prefix}{k}"
        if name == _GRID_PREFIX:
            if not isinstance(v, dict):
                raise ConfigError(f"{name} must be a table of key = [values]")
            flat[name] = v
        elif isinstance(v, dict):
            flat.update(_flatten(v, name + "."))
        else:
            flat[name] = v
    return flat


def set_key(cfg: ExperimentConfig, name: str, value) -> None:
    """Validate and assign one dotted key (used by loading and sweeps)."""
    key = SCHEMA.get(name)
    if key is None:
        raise ConfigError(f"unknown configuration key {name!r}")
    key.set(cfg, _coerce(key, value))


def apply_overrides(base: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    cfg = copy.deepcopy(base)
    for name, value in overrides.items():
        set_key(cfg, name, value)
    return cfg


def _parse_grid(table: dict) -> dict:
    grid = {}
    for name, values in table.items():
        if name not in SCHEMA:
            raise ConfigError(f"{_GRID_PREFIX}: unknown configuration key {name!r}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{_GRID_PREFIX}.{name} must be a non-empty list")
        grid[name] = [_coerce(SCHEMA[name], v) for v in values]
    return grid


def config_from_dict(doc: dict, source: str = "<dict>") -> ExperimentConfig:
    """Build a validated config from a parsed document (nested tables)."""
    flat = _flatten(doc)
    unknown = [k for k in flat if k not in SCHEMA and k not in _PRESET_KEYS and k != _GRID_PREFIX]
    if unknown:
        raise ConfigError(f"{source}: unknown configuration key {unknown[0]!r}")
    if not flat.get("experiment.protocol"):
        raise ConfigError(f"{source}: experiment.protocol is required "
                          f"({SCHEMA['experiment.protocol'].describe_range()})")
    cfg = ExperimentConfig()
    prov = []

    def default(name, value, why="default"):
        prov.append(f"{name} = {value!r} ({why})")

    # presets first so an explicit spring constant still wins
    base_preset = flat.get("sea.preset", "measured")
    for j in JOINTS:
        preset = flat.get(f"sea.{j}.preset", base_preset)
        if preset not in SPRING_PRESETS:
            which = f"sea.{j}.preset" if f"sea.{j}.preset" in flat else "sea.preset"
            raise ConfigError(f"{which} = {preset!r}: must be one of {', '.join(SPRING_PRESETS)}")
        cfg.sea[j].spring_k = SPRING_PRESETS[preset]
        if f"sea.{j}.spring_k_nm_per_deg" not in flat:
            default(f"sea.{j}.spring_k_nm_per_deg", cfg.sea[j].spring_k, f"preset {preset}")
    try:
        for name, value in flat.items():
            if name in SCHEMA:
                set_key(cfg, name, value)
        if _GRID_PREFIX in flat:
            cfg.sweep.grid = _parse_grid(flat[_GRID_PREFIX])
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    # values that default from other values
    for link in ("thigh", "shank", "foot"):
        l: Link = getattr(cfg.robot, link)
        if f"robot.{link}.com_m" not in flat:
            l.com_offset = 0.5 * l.length
            default(f"robot.{link}.com_m", l.com_offset, "link midpoint")
        if f"robot.{link}.inertia_kgm2" not in flat:
            l.inertia = l.mass * l.length ** 2 / 12.0
            default(f"robot.{link}.inertia_kgm2", l.inertia, "uniform rod")
    for j in JOINTS:
        if f"control.{j}.target_deg" not in flat:
            cfg.controller.target_pose[j] = cfg.initial_pose[j]
            default(f"control.{j}.target_deg", cfg.initial_pose[j], "initial pose")
    for name, key in SCHEMA.items():
        if name not in flat and name not in _DERIVED:
            default(name, key.get(cfg))
    for line in prov:
        log.info("%s: %s", source, line)
    cfg.provenance = prov
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


_LINE_RE = re.compile(r"line (\d+)")


def loads_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = _LINE_RE.search(str(exc))
            line = int(m.group(1)) if m else "?"
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(f"{source}:{line}: parse error: {msg}") from None
    return config_from_dict(doc, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return loads_config(text, str(path))


# ---------------------------------------------------------------- dumping


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def dump_config(cfg: ExperimentConfig) -> str:
    """Every schema key with its normalized value, as flat dotted TOML.

    ``loads_config(dump_config(c))`` reproduces ``c`` exactly.
    """
    lines = []
    for name, key in SCHEMA.items():
        value = key.get(cfg)
        if value is None:
            continue
        if key.kind is float:
            value = float(value)
        lines.append(f"{name} = {_fmt(value)}")
    for name, values in cfg.sweep.grid.items():
        lines.append(f'{_GRID_PREFIX}."{name}" = {_fmt(list(values))}')
    return "\n".join(lines) + "\n"


def config_equal(a: ExperimentConfig, b: ExperimentConfig) -> bool:
    return dump_config(a) == dump_config(b)
