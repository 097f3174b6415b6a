"""Single series elastic actuator: spring, motor envelope, gearbox, sensors.

Angles are degrees and torques N·m throughout this module, except
``motor_damping`` which is N·m·s/rad and ``reflected_inertia`` in kg·m².

The ``*_k`` functions are the compiled kernels; they take a packed
parameter vector (see :meth:`SeaParams.pack`) so the simulation loop can
call them without Python objects.  The un-suffixed functions are the
public, dataclass-based API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ._jit import njit

RAD2DEG = 180.0 / math.pi
DEG2RAD = math.pi / 180.0

# packed parameter layout
P_KT = 0
P_STALL = 1
P_NOLOAD = 2
P_GEAR = 3
P_BACKLASH = 4
P_BACKDRIVE = 5
P_K = 6
P_TRAVEL = 7
P_STOP_K = 8
P_STOP_C = 9
P_HYST = 10
P_HYST_SLIP = 11
P_JR = 12
P_BM = 13
P_RES = 14
P_EPS_V = 15
N_PARAMS = 16


class SpringMode(str, Enum):
    ACTIVE = "active"
    LOCKED = "locked"


class SimulationFault(RuntimeError):
    """Raised when the integrated state stops being finite."""


@dataclass
class SeaParams:
    """Constants of one actuator.

    Defaults are the catalogue values of the EVAL-03 drive train plus the
    measured spring constant; inertia, damping, hysteresis and sensor
    resolution are modelling assumptions.
    """

    torque_constant: float = 0.48  # N·m/A, referred to the output shaft
    stall_torque: float = 1.33  # N·m
    no_load_speed: float = 156.5  # rpm
    gear_ratio: float = 61.4
    backlash: float = 0.22  # deg, full play width
    back_drive_torque: float = 0.135  # N·m
    spring_k: float = 0.012  # N·m/deg
    spring_travel: float = 40.0  # deg
    stop_stiffness: float = 1.0  # N·m/deg
    stop_damping: float = 0.01  # N·m·s/deg
    hysteresis_torque: float = 0.005  # N·m
    hysteresis_slip: float = 0.01  # deg of pre-sliding before friction saturates
    reflected_inertia: float = 1.0e-4  # kg·m²
    motor_damping: float = 1.0e-3  # N·m·s/rad
    sensor_resolution: float = 0.088  # deg/count
    stiction_velocity: float = 0.5  # deg/s
    ideal_sensor: bool = False

    def validate(self) -> None:
        positive = (
            "torque_constant", "stall_torque", "no_load_speed", "gear_ratio",
            "back_drive_torque", "spring_k", "spring_travel", "stop_stiffness",
            "stop_damping", "hysteresis_slip", "reflected_inertia",
            "motor_damping", "sensor_resolution", "stiction_velocity",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.backlash < 0:
            raise ValueError("backlash must be >= 0")
        if self.hysteresis_torque < 0:
            raise ValueError("hysteresis_torque must be >= 0")
        if self.spring_k * self.spring_travel > self.stall_torque:
            raise ValueError(
                "spring_k * spring_travel exceeds stall_torque "
                f"({self.spring_k * self.spring_travel:.3f} > {self.stall_torque})"
            )

    @property
    def stall_current(self) -> float:
        return self.stall_torque / self.torque_constant

    def pack(self) -> np.ndarray:
        p = np.zeros(N_PARAMS)
        p[P_KT] = self.torque_constant
        p[P_STALL] = self.stall_torque
        p[P_NOLOAD] = self.no_load_speed
        p[P_GEAR] = self.gear_ratio
        p[P_BACKLASH] = self.backlash
        p[P_BACKDRIVE] = self.back_drive_torque
        p[P_K] = self.spring_k
        p[P_TRAVEL] = self.spring_travel
        p[P_STOP_K] = self.stop_stiffness
        p[P_STOP_C] = self.stop_damping
        p[P_HYST] = self.hysteresis_torque
        p[P_HYST_SLIP] = self.hysteresis_slip
        p[P_JR] = self.reflected_inertia
        p[P_BM] = self.motor_damping
        p[P_RES] = 0.0 if self.ideal_sensor else self.sensor_resolution
        p[P_EPS_V] = self.stiction_velocity
        return p


SPRING_PRESETS = {"design": 0.015, "measured": 0.012}


@dataclass
class HysteresisState:
    """Friction torque held by the spring assembly and the deflection it was last updated at."""

    torque: float = 0.0
    last_deflection: float = 0.0

    def mirrored(self) -> "HysteresisState":
        return HysteresisState(-self.torque, -self.last_deflection)


@dataclass
class SeaState:
    """Instantaneous state of one actuator.

    ``motor_angle`` is the gear output before the backlash play;
    the spring input angle is ``motor_angle + backlash_offset``.
    """

    motor_angle: float = 0.0  # deg
    motor_velocity: float = 0.0  # deg/s
    joint_angle: float = 0.0  # deg
    joint_velocity: float = 0.0  # deg/s
    spring_mode: SpringMode = SpringMode.ACTIVE
    backlash_offset: float = 0.0  # deg
    hysteresis: HysteresisState = field(default_factory=HysteresisState)

    @property
    def spring_input_angle(self) -> float:
        return self.motor_angle + self.backlash_offset

    @property
    def deflection(self) -> float:
        return self.spring_input_angle - self.joint_angle


# ---------------------------------------------------------------- kernels


@njit
def spring_torque_k(delta, delta_rate, p, hyst, last_delta):
    """Returns (torque, new_hyst). ``last_delta`` for the new state is ``delta``."""
    tau_h = p[P_HYST]
    if tau_h > 0.0:
        h = hyst + (tau_h / p[P_HYST_SLIP]) * (delta - last_delta)
        if h > tau_h:
            h = tau_h
        elif h < -tau_h:
            h = -tau_h
    else:
        h = 0.0
    tau = p[P_K] * delta + h
    travel = p[P_TRAVEL]
    if delta > travel:
        stop = p[P_STOP_K] * (delta - travel) + p[P_STOP_C] * delta_rate
        if stop > 0.0:
            tau += stop
    elif delta < -travel:
        stop = p[P_STOP_K] * (delta + travel) + p[P_STOP_C] * delta_rate
        if stop < 0.0:
            tau += stop
    return tau, h


@njit
def stop_engaged_k(delta, delta_rate, p):
    """True when the hard-stop damper is contributing (for implicit damping)."""
    travel = p[P_TRAVEL]
    if delta > travel:
        return p[P_STOP_K] * (delta - travel) + p[P_STOP_C] * delta_rate > 0.0
    if delta < -travel:
        return p[P_STOP_K] * (delta + travel) + p[P_STOP_C] * delta_rate < 0.0
    return False


@njit
def motor_available_torque_k(current, speed_rpm, p):
    stall = p[P_STALL]
    tau = p[P_KT] * current
    if tau * speed_rpm > 0.0:
        env = stall * max(0.0, 1.0 - abs(speed_rpm) / p[P_NOLOAD])
        if tau > env:
            tau = env
        elif tau < -env:
            tau = -env
    if tau > stall:
        tau = stall
    elif tau < -stall:
        tau = -stall
    return tau


@njit
def gear_friction_k(speed, applied, p):
    """Karnopp friction at the output; ``speed`` in deg/s."""
    limit = p[P_BACKDRIVE]
    if abs(speed) < p[P_EPS_V]:
        if applied > limit:
            return -limit
        if applied < -limit:
            return limit
        return -applied
    return -limit if speed > 0.0 else limit


@njit
def gear_friction_smooth_k(speed, p):
    """tanh-regularised friction and its slope d(torque)/d(speed) per deg/s."""
    eps = p[P_EPS_V]
    th = math.tanh(speed / eps)
    return -p[P_BACKDRIVE] * th, -p[P_BACKDRIVE] * (1.0 - th * th) / eps


@njit
def backlash_k(offset, backlash):
    """Deadband play. Returns the new offset (output - motor)."""
    half = 0.5 * backlash
    if offset > half:
        return half
    if offset < -half:
        return -half
    return offset


@njit
def sensor_k(angle, resolution):
    if resolution <= 0.0:
        return angle
    return math.floor(angle / resolution + 0.5) * resolution


@njit
def motor_step_k(angle, vel, offset, current, tau_spring, dt, p):
    """Advance motor-side state one substep. Returns (angle, vel, offset, ok)."""
    vel_rad = vel * DEG2RAD
    tau_m = motor_available_torque_k(current, vel / 6.0, p)
    applied = tau_m - tau_spring - p[P_BM] * vel_rad
    if abs(vel) < p[P_EPS_V] and abs(applied) <= p[P_BACKDRIVE]:
        new_vel = 0.0
    else:
        fric = gear_friction_k(vel, applied, p)
        new_vel = vel + dt * (applied + fric) / p[P_JR] * RAD2DEG
        if vel * new_vel < 0.0:
            new_vel = 0.0
    new_angle = angle + dt * new_vel
    # play: spring input follows motor only once the deadband edge is reached
    new_offset = backlash_k(offset - (new_angle - angle), p[P_BACKLASH])
    ok = math.isfinite(new_angle) and math.isfinite(new_vel)
    return new_angle, new_vel, new_offset, ok


# ------------------------------------------------------------- public API


def spring_torque(
    deflection: float,
    deflection_rate: float,
    params: SeaParams,
    hysteresis: HysteresisState | None = None,
) -> tuple[float, HysteresisState]:
    """Torque transmitted by the spring for deflection = input - joint angle.

    Hysteresis is a rate-independent elastic-plastic friction element in
    parallel with the spring: it follows the deflection with stiffness
    ``hysteresis_torque / hysteresis_slip`` and saturates at
    ``±hysteresis_torque``.
    """
    if hysteresis is None:
        hysteresis = HysteresisState(0.0, deflection)
    tau, h = spring_torque_k(
        float(deflection), float(deflection_rate), params.pack(),
        hysteresis.torque, hysteresis.last_deflection,
    )
    return float(tau), HysteresisState(float(h), float(deflection))


def motor_available_torque(current_cmd: float, output_speed: float, params: SeaParams) -> float:
    """Torque the drive can produce at ``output_speed`` rpm for ``current_cmd`` A."""
    return float(motor_available_torque_k(float(current_cmd), float(output_speed), params.pack()))


def gear_friction_torque(output_speed: float, applied_torque: float, params: SeaParams) -> float:
    """Back-drive friction of the geartrain (stick below ``stiction_velocity``)."""
    return float(gear_friction_k(float(output_speed), float(applied_torque), params.pack()))


def backlash_transfer(
    motor_side_angle: float, state: SeaState, params: SeaParams
) -> tuple[float, SeaState]:
    """Move the motor side to ``motor_side_angle`` through the gear play.

    The output only follows once the motor reaches an edge of the deadband,
    so ``|output - motor| <= backlash / 2`` always holds afterwards.
    """
    output = state.motor_angle + state.backlash_offset
    offset = float(backlash_k(output - motor_side_angle, params.backlash))
    new = replace(state, motor_angle=float(motor_side_angle), backlash_offset=offset)
    return motor_side_angle + offset, new


def sensor_read(true_angle: float, params: SeaParams) -> float:
    """Quantised angle reading (identity when ``ideal_sensor`` is set)."""
    res = 0.0 if params.ideal_sensor else params.sensor_resolution
    return float(sensor_k(float(true_angle), res))


def sea_motor_step(state: SeaState, current_cmd: float, dt: float, params: SeaParams) -> SeaState:
    """Advance the motor side of one actuator by ``dt`` with the joint held.

    In locked mode the motor is slaved to the joint and nothing is integrated.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if state.spring_mode is SpringMode.LOCKED:
        return replace(state, motor_angle=state.joint_angle,
                       motor_velocity=state.joint_velocity, backlash_offset=0.0)
    p = params.pack()
    rate = state.motor_velocity - state.joint_velocity
    tau_s, h = spring_torque_k(state.deflection, rate, p,
                               state.hysteresis.torque, state.hysteresis.last_deflection)
    angle, vel, offset, ok = motor_step_k(
        state.motor_angle, state.motor_velocity, state.backlash_offset,
        float(current_cmd), tau_s, dt, p,
    )
    if not ok:
        raise SimulationFault(f"non-finite motor state (angle={angle}, velocity={vel})")
    return replace(
        state,
        motor_angle=float(angle),
        motor_velocity=float(vel),
        backlash_offset=float(offset),
        hysteresis=HysteresisState(float(h), state.deflection),
    )
