"""Scripted protocols: spring calibration, free vibration, drop tests, sweeps."""
from __future__ import annotations

import copy
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from ._jit import njit
from .analysis import MetricsReport, compute_metrics, dominant_frequency
from .control import JOINTS, ControllerConfig, PdGains
from .dynamics import ContactParams, RobotModel, WorldState
from .sea import (
    DEG2RAD,
    RAD2DEG,
    SeaParams,
    SeaState,
    SimulationFault,
    SpringMode,
    spring_torque_k,
)
from .sim import ExternalTorque, SimResult, lowest_foot_height, simulate
from .trace import COLUMNS, Trace


class Protocol(str, Enum):
    SPRING_CAL = "spring_cal"
    NATURAL_FREQ = "natural_freq"
    DROP_TEST = "drop_test"
    SWEEP = "sweep"


class ExperimentError(RuntimeError):
    """A protocol could not produce a meaningful measurement."""


@dataclass
class CalibrationSpec:
    """Quasi-static torque staircase on a clamped-motor rig."""

    joint: str = "knee"
    max_torque: float | None = None  # N·m; default reaches full spring travel
    steps_per_quadrant: int = 20
    rate_tolerance: float = 0.05  # deg/s
    settle_hold: float = 0.2  # s the rate must stay below tolerance
    max_step_time: float = 5.0  # s before a step is declared non-settling
    rig_inertia: float = 1.0e-4  # kg·m², output shaft plus fixture arm
    rig_damping: float | None = None  # N·m·s/rad; default critical
    physics_dt: float = 1.0e-4


@dataclass
class NaturalFreqSpec:
    joint: str = "knee"
    impulse_torque: float = 0.1  # N·m
    impulse_duration: float = 0.01  # s
    duration: float = 4.0  # s
    reduced: bool = False  # single inertia on the spring instead of the robot
    reduced_inertia: float = 2.0e-4  # kg·m²
    min_cycles: float = 2.0  # ring-down cycles the flick must buy against friction
    joint_impulse: dict = field(default_factory=dict)  # per-joint torque override, N·m

    def impulse_for(self, joint: str) -> float:
        return float(self.joint_impulse.get(joint, self.impulse_torque))


@dataclass
class SweepSpec:
    """Cartesian product over dotted config keys, in declaration order."""

    grid: dict = field(default_factory=dict)
    base_protocol: Protocol = Protocol.DROP_TEST
    workers: int = 1


@dataclass
class OutputSpec:
    directory: str = "."
    settle_band: float = 2.0  # deg
    settle_hold: float = 0.2  # s
    force_threshold: float = 0.1  # N


@dataclass
class ExperimentConfig:
    protocol: Protocol = Protocol.DROP_TEST
    drop_height: float = 0.070  # m, free fall of the lowest foot point
    initial_pose: dict = field(default_factory=lambda: {"hip": -30.0, "knee": 60.0, "ankle": -35.0})
    spring_modes: dict = field(default_factory=lambda: {
        "hip": SpringMode.LOCKED, "knee": SpringMode.ACTIVE, "ankle": SpringMode.ACTIVE})
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    duration: float = 1.0  # s
    physics_dt: float = 1.0e-4  # s
    sample_rate: float = 1000.0  # Hz
    seed: int = 0
    hold_time: float = 0.5  # s held in the fixture before release
    robot: RobotModel = field(default_factory=RobotModel)
    sea: dict = field(default_factory=lambda: {j: SeaParams() for j in JOINTS})
    contact: ContactParams = field(default_factory=ContactParams)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    natural_freq: NaturalFreqSpec = field(default_factory=NaturalFreqSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    provenance: list = field(default_factory=list, compare=False, repr=False)

    def sea_list(self) -> list[SeaParams]:
        return [self.sea[j] for j in JOINTS]

    def validate(self) -> None:
        if self.duration <= 0:
            raise ValueError("experiment.duration_s must be > 0")
        if self.physics_dt <= 0:
            raise ValueError("experiment.physics_dt_s must be > 0")
        if self.sample_rate <= 0 or self.sample_rate * self.physics_dt > 1.0 + 1e-12:
            raise ValueError("experiment.sample_rate_hz must be in (0, 1/physics_dt]")
        if self.drop_height < 0:
            raise ValueError("experiment.drop_height_m must be >= 0")
        if self.hold_time < 0:
            raise ValueError("experiment.hold_s must be >= 0")
        self.robot.validate()
        self.contact.validate()
        for j in JOINTS:
            self.sea[j].validate()
            lo, hi = self.robot.joint_limits[j]
            if not lo <= self.initial_pose[j] <= hi:
                raise ValueError(
                    f"experiment.initial_pose.{j} = {self.initial_pose[j]} outside [{lo}, {hi}] deg")
        self.controller.validate(min(p.stall_current for p in self.sea_list()))


# ------------------------------------------------------------ calibration


@dataclass
class CalibrationRecord:
    load_steps: list  # N·m applied at the output, in staircase order
    deflections: list  # deg, settled joint-side rotation per step
    loading: list  # True where |load| grew at that step
    fitted_k_loading: float  # N·m/deg
    fitted_k_unloading: float
    loop_area: float  # N·m·deg
    r_squared: float
    amplitude: float  # deg, largest settled deflection magnitude


def staircase(max_torque: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """0 → +max → 0 → −max → 0 in ``steps`` increments per quadrant.

    Returns the load levels (excluding the initial zero) and a loading flag.
    """
    up = np.arange(1, steps + 1) / steps
    down = np.arange(steps - 1, -1, -1) / steps
    unit = np.concatenate([up, down, -up, -down])
    loading = np.concatenate([np.ones(steps, bool), np.zeros(steps, bool)] * 2)
    return max_torque * unit, loading


@njit
def _settle_k(theta, omega, hyst, hlast, load, J, c, p, dt, tol, hold, max_time):
    """Integrate the rig at constant load until the rate stays below ``tol``.

    Motor side is clamped at zero, so the deflection is ``-theta``.
    Returns (theta, omega, hyst, hlast, elapsed, settled).
    """
    n_max = int(max_time / dt)
    n_hold = int(round(hold / dt))
    quiet = 0
    for n in range(n_max):
        delta = -theta
        tau, hyst = spring_torque_k(delta, -omega, p, hyst, hlast)
        hlast = delta
        acc = (tau + load - c * omega * DEG2RAD) / J * RAD2DEG
        omega += dt * acc
        theta += dt * omega
        if not (math.isfinite(theta) and math.isfinite(omega)):
            return theta, omega, hyst, hlast, (n + 1) * dt, False
        if abs(omega) < tol:
            quiet += 1
            if quiet >= n_hold:
                return theta, omega, hyst, hlast, (n + 1) * dt, True
        else:
            quiet = 0
    return theta, omega, hyst, hlast, n_max * dt, False


def _fit(x, y) -> tuple[float, float]:
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), min(1.0, max(0.0, r2))


def shoelace_area(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def run_spring_calibration(config: ExperimentConfig) -> CalibrationRecord:
    """Load the output shaft in quasi-static steps and fit torque/deflection.

    Raises :class:`ExperimentError` if a step does not settle.
    """
    cal = config.calibration
    params = config.sea[cal.joint]
    p = params.pack()
    max_torque = cal.max_torque
    if max_torque is None:
        max_torque = params.spring_k * params.spring_travel + params.hysteresis_torque
    J = cal.rig_inertia
    c = cal.rig_damping
    if c is None:
        c = 2.0 * math.sqrt(params.spring_k * RAD2DEG * J)
    loads, loading = staircase(max_torque, cal.steps_per_quadrant)
    theta = omega = hyst = hlast = 0.0
    defl = np.empty(loads.size)
    for i, load in enumerate(loads):
        theta, omega, hyst, hlast, elapsed, ok = _settle_k(
            theta, omega, hyst, hlast, float(load), J, c, p, cal.physics_dt,
            cal.rate_tolerance, cal.settle_hold, cal.max_step_time)
        if not ok:
            raise ExperimentError(
                f"calibration step {i} (load {load:+.4f} N·m) did not settle within "
                f"{cal.max_step_time} s: rate {omega:.3g} deg/s exceeds "
                f"{cal.rate_tolerance} deg/s")
        defl[i] = theta
    k_load, _ = _fit(defl[loading], loads[loading])
    k_unload, _ = _fit(defl[~loading], loads[~loading])
    _, r2 = _fit(defl, loads)
    # the cycle starts and ends at the origin
    area = shoelace_area(np.concatenate([[0.0], defl]), np.concatenate([[0.0], loads]))
    return CalibrationRecord(
        load_steps=loads.tolist(), deflections=defl.tolist(), loading=loading.tolist(),
        fitted_k_loading=k_load, fitted_k_unloading=k_unload, loop_area=area,
        r_squared=r2, amplitude=float(np.max(np.abs(defl))),
    )


# ------------------------------------------------------- natural frequency


@njit
def _free_vibration_k(J, p, dt, n_steps, every, impulse, n_impulse, out):
    theta = omega = hyst = hlast = 0.0
    row = 0
    for n in range(n_steps):
        if n % every == 0 and row < out.shape[0]:
            out[row] = theta
            row += 1
        delta = -theta
        tau, hyst = spring_torque_k(delta, -omega, p, hyst, hlast)
        hlast = delta
        ext = impulse if n < n_impulse else 0.0
        omega += dt * (tau + ext) / J * RAD2DEG
        theta += dt * omega


def reduced_natural_frequency(params: SeaParams, inertia: float, nf: NaturalFreqSpec,
                              physics_dt: float = 1e-4, sample_rate: float = 1000.0):
    """Single inertia on one spring, motor clamped. Returns (time, angle, Hz)."""
    every = int(round(1.0 / (sample_rate * physics_dt)))
    n = int(round(nf.duration / physics_dt))
    out = np.zeros((n + every - 1) // every)
    _free_vibration_k(inertia, params.pack(), physics_dt, n, every, nf.impulse_for(nf.joint),
                      int(round(nf.impulse_duration / physics_dt)), out)
    t = np.arange(out.size) / sample_rate
    return t, out, dominant_frequency(out, sample_rate)


def _rest_state(config: ExperimentConfig, modes: dict, z: float, body_fixed: bool,
                clamped=(False, False, False)) -> WorldState:
    joints = [SeaState(motor_angle=config.initial_pose[j], joint_angle=config.initial_pose[j],
                       spring_mode=SpringMode(modes[j])) for j in JOINTS]
    return WorldState(z, 0.0, joints, motor_clamped=tuple(clamped), body_fixed=body_fixed)


def run_natural_frequency(config: ExperimentConfig, joint: str | None = None):
    """Flick one joint and return ``(trace, frequency_hz)``.

    The selected joint is Active and every other joint Locked; all motors are
    clamped and the body is fixed high above the ground.  With
    ``natural_freq.reduced`` the robot is replaced by a single inertia and the
    returned trace is ``None``.
    """
    nf = config.natural_freq
    joint = joint or nf.joint
    if joint not in JOINTS:
        raise ValueError(f"unknown joint {joint!r}")
    params = config.sea[joint]
    if nf.reduced:
        _, x, f = reduced_natural_frequency(params, nf.reduced_inertia, nf,
                                            config.physics_dt, config.sample_rate)
        _check_excited(x, 0.0, params, joint, nf)
        return None, f
    modes = {j: SpringMode.ACTIVE if j == joint else SpringMode.LOCKED for j in JOINTS}
    z = 1.0 - lowest_foot_height(config.initial_pose, config.robot)  # well clear of the floor
    state = _rest_state(config, modes, z, body_fixed=True, clamped=(True, True, True))
    ctrl = replace(config.controller, gains={j: PdGains() for j in JOINTS})
    seas = config.sea_list()
    # let gravity sag settle before the flick
    settled = simulate(state, config.robot, seas, config.contact, ctrl, 1.0,
                       config.physics_dt, config.sample_rate).final_state
    settled = replace(settled, time=0.0)
    kick = ExternalTorque(JOINTS.index(joint), nf.impulse_for(joint), 0.0, nf.impulse_duration)
    res = simulate(settled, config.robot, seas, config.contact, ctrl, nf.duration,
                   config.physics_dt, config.sample_rate, kick)
    x = res.trace.joint(joint, "q_deg")
    js = settled.joints[JOINTS.index(joint)]
    _check_excited(x, js.spring_input_angle, params, joint, nf)
    return res.trace, dominant_frequency(x, config.sample_rate)


def _check_excited(x, spring_input: float, params: SeaParams, joint: str,
                   nf: NaturalFreqSpec) -> None:
    """Reject flicks that die in the friction band or run into the hard stop.

    Coulomb-like hysteresis removes ``4·τ_h/k`` of amplitude per cycle, so a
    half-swing below ``min_cycles`` times that never rings freely.
    """
    decay = 4.0 * params.hysteresis_torque / params.spring_k
    half_swing = 0.5 * float(np.max(x) - np.min(x)) if len(x) else 0.0
    impulse = nf.impulse_for(joint)
    if half_swing <= max(nf.min_cycles * decay, 1e-9):
        raise ExperimentError(
            f"impulse {impulse} N·m for {nf.impulse_duration} s on {joint} gave a "
            f"{half_swing:.3f} deg swing, which friction stops within {nf.min_cycles:g} "
            f"cycles ({decay:.3f} deg lost per cycle); increase the impulse torque")
    worst = float(np.max(np.abs(spring_input - np.asarray(x))))
    if worst > params.spring_travel:
        raise ExperimentError(
            f"impulse {impulse} N·m on {joint} drove the spring {worst:.1f} deg, past its "
            f"{params.spring_travel} deg travel; reduce the impulse torque")


# ----------------------------------------------------------------- drops


def initial_drop_state(config: ExperimentConfig, modes: dict | None = None) -> WorldState:
    """Released state: held ``hold_time`` s in the fixture, then lifted so the
    lowest foot point is exactly ``drop_height`` above the ground.

    A zero drop height means standing: the leg is set down on the ground and
    left ``hold_time`` s more with the body free, so the run starts settled.
    """
    modes = dict(config.spring_modes if modes is None else modes)
    model = config.robot
    seas = config.sea_list()
    park = 1.0 - lowest_foot_height(config.initial_pose, model)
    state = _rest_state(config, modes, park, body_fixed=True)
    if config.hold_time > 0:
        state = simulate(state, model, seas, config.contact, config.controller,
                         config.hold_time, config.physics_dt, config.sample_rate).final_state
    held = {j: s.joint_angle for j, s in zip(JOINTS, state.joints)}
    z = config.drop_height - lowest_foot_height(held, model)
    state = replace(state, z=z, zd=0.0, time=0.0, body_fixed=False)
    if config.drop_height == 0.0 and config.hold_time > 0:
        state = simulate(state, model, seas, config.contact, config.controller,
                         config.hold_time, config.physics_dt, config.sample_rate).final_state
        state = replace(state, time=0.0)
    return state


def run_drop_test(config: ExperimentConfig, spring_modes: dict | None = None) -> SimResult:
    """Drop from ``drop_height``; ``spring_modes`` overrides the configured modes."""
    modes = dict(config.spring_modes)
    if spring_modes:
        modes.update({j: SpringMode(m) for j, m in spring_modes.items()})
    state = initial_drop_state(config, modes)
    return simulate(state, config.robot, config.sea_list(), config.contact, config.controller,
                    config.duration, config.physics_dt, config.sample_rate)


def metrics_for(trace: Trace, config: ExperimentConfig, window=None) -> MetricsReport:
    out = config.output
    return compute_metrics(trace, window, out.settle_band, out.settle_hold, out.force_threshold)


# ----------------------------------------------------------------- sweeps


@dataclass
class SweepCell:
    index: int
    overrides: dict
    config: ExperimentConfig
    metrics: MetricsReport | None
    trace: Trace | None
    error: str | None = None


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of ``{key: [values]}`` in key then value order."""
    if not grid:
        return []
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _run_cell(args) -> tuple:
    from .config import apply_overrides

    index, base, overrides = args
    try:
        cfg = apply_overrides(base, overrides)
        cfg.validate()
        res = run_drop_test(cfg)
        return index, cfg, res.trace, None
    except (SimulationFault, ValueError, ExperimentError) as exc:
        return index, base, None, f"{type(exc).__name__}: {exc}"


def run_sweep(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[SweepCell]:
    """Run every grid cell independently; faults are recorded per cell.

    With ``out_dir`` each cell writes ``cell_NNN.csv`` and ``cell_NNN.metrics.txt``
    and a ``summary.csv`` table is written last.  Results keep grid order.
    """
    from .io import write_text_atomic, write_trace

    combos = expand_grid(config.sweep.grid)
    jobs = [(i, config, o) for i, o in enumerate(combos)]
    if config.sweep.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.sweep.workers) as pool:
            raw = list(pool.map(_run_cell, jobs))
    else:
        raw = [_run_cell(j) for j in jobs]
    cells = []
    for (index, cfg, trace, err), overrides in zip(raw, combos):
        rep = metrics_for(trace, cfg) if trace is not None else None
        cells.append(SweepCell(index, overrides, cfg, rep, trace, err))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for c in cells:
            if c.trace is not None:
                write_trace(c.trace, out / f"cell_{c.index:03d}.csv")
                write_text_atomic(out / f"cell_{c.index:03d}.metrics.txt", c.metrics.to_text())
        write_text_atomic(out / "summary.csv", sweep_summary(cells))
    return cells


def sweep_summary(cells: list[SweepCell]) -> str:
    """CSV with one row per cell: index, overrides, status, flat metrics."""
    keys = sorted({k for c in cells for k in c.overrides})
    metric_keys = None
    for c in cells:
        if c.metrics is not None:
            metric_keys = list(c.metrics.flat())
            break
    metric_keys = metric_keys or []
    lines = [",".join(["cell"] + keys + ["status"] + metric_keys)]
    for c in cells:
        row = [str(c.index)] + [str(c.overrides.get(k, "")) for k in keys]
        row.append("ok" if c.error is None else '"' + c.error.replace('"', "'") + '"')
        flat = c.metrics.flat() if c.metrics is not None else {}
        row += ["" if flat.get(k) is None else str(flat[k]) for k in metric_keys]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def landing_comparison(config: ExperimentConfig) -> dict:
    """Locked (all joints) versus configured modes, with the landing metrics.

    Integrated current runs from touchdown until the joint has settled in
    that run, i.e. over the effort the landing actually required.
    """
    locked = run_drop_test(config, {j: SpringMode.LOCKED for j in JOINTS}).trace
    active = run_drop_test(config).trace
    return {"locked": landing_metrics(locked, config), "active": landing_metrics(active, config),
            "traces": {"locked": locked, "active": active}}


def landing_metrics(trace: Trace, config: ExperimentConfig, joint: str = "knee") -> dict:
    from .analysis import detect_touchdowns, integrated_current, peak_current, settling_time_series

    out = config.output
    td = detect_touchdowns(trace, out.force_threshold)
    if not td:
        raise ExperimentError("no touchdown detected")
    t0 = td[0]
    st = settling_time_series(trace.time, trace.joint(joint, "q_deg"), t0, out.settle_band,
                              out.settle_hold)
    t_end = float(trace.time[-1]) if st is None else t0 + st
    defl = trace.joint(joint, "motor_deg") - trace.joint(joint, "q_deg")
    return {
        "touchdown_s": t0,
        "peak_current_ma": peak_current(trace, joint, (t0, None)),
        "settling_time_s": st,
        "integrated_current_as": integrated_current(trace, joint, (t0, t_end)),
        "max_deflection_deg": float(np.max(np.abs(defl))),
    }


def clone(config: ExperimentConfig) -> ExperimentConfig:
    return copy.deepcopy(config)


__all__ = [
    "COLUMNS", "CalibrationRecord", "CalibrationSpec", "ExperimentConfig", "ExperimentError",
    "NaturalFreqSpec", "OutputSpec", "Protocol", "SweepCell", "SweepSpec", "clone",
    "expand_grid", "initial_drop_state", "landing_comparison", "landing_metrics", "metrics_for",
    "reduced_natural_frequency", "run_drop_test", "run_natural_frequency",
    "run_spring_calibration", "run_sweep", "shoelace_area", "staircase", "sweep_summary",
]
