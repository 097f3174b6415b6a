"""Per-joint PD position control with zero-order hold."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._jit import njit
from .sea import SeaParams, sensor_k

JOINTS = ("hip", "knee", "ankle")


class FeedbackSource(str, Enum):
    MOTOR = "motor"
    JOINT = "joint"


@dataclass
class PdGains:
    kp: float = 0.0  # A/deg
    kd: float = 0.0  # A/(deg/s)

    def validate(self, name: str = "") -> None:
        if self.kp < 0 or self.kd < 0:
            raise ValueError(f"control.{name}: kp and kd must be >= 0")


@dataclass
class ControllerConfig:
    control_rate: float = 1000.0  # Hz
    current_limit: float = 2.7  # A
    target_pose: dict = field(default_factory=lambda: {j: 0.0 for j in JOINTS})
    gains: dict = field(default_factory=lambda: {j: PdGains() for j in JOINTS})
    feedback_source: FeedbackSource = FeedbackSource.MOTOR
    derivative_cutoff: float = 50.0  # Hz

    def validate(self, stall_current: float | None = None) -> None:
        if self.control_rate <= 0:
            raise ValueError("control.rate_hz must be > 0")
        if self.current_limit <= 0:
            raise ValueError("control.current_limit_a must be > 0")
        if stall_current is not None and self.current_limit > stall_current + 1e-9:
            raise ValueError(
                f"control.current_limit_a must be <= stall current {stall_current:.3f} A")
        if self.derivative_cutoff <= 0:
            raise ValueError("control.derivative_cutoff_hz must be > 0")
        for j in JOINTS:
            self.gains[j].validate(j)

    def filter_alpha(self) -> float:
        wc = 2.0 * math.pi * self.derivative_cutoff / self.control_rate
        return wc / (1.0 + wc)


@njit
def pd_command_k(target, angle, rate, kp, kd, limit):
    i = kp * (target - angle) - kd * rate
    if i > limit:
        return limit
    if i < -limit:
        return -limit
    return i


def pd_command(target: float, measured_angle: float, measured_rate: float,
               gains: PdGains, current_limit: float) -> float:
    """Current command (A) from a PD law, saturated at ``±current_limit``."""
    return float(pd_command_k(target, measured_angle, measured_rate, gains.kp, gains.kd,
                              current_limit))


@njit
def controller_tick_k(motor_angles, joint_angles, use_joint, resolution, period, alpha,
                      prev, rate, started, kp, kd, target, limit, out):
    """One control tick for all joints; ``prev``/``rate`` hold the differentiator state."""
    for j in range(3):
        raw = joint_angles[j] if use_joint else motor_angles[j]
        meas = sensor_k(raw, resolution[j])
        if started[j]:
            rate[j] += alpha * ((meas - prev[j]) / period - rate[j])
        else:
            rate[j] = 0.0
            started[j] = True
        prev[j] = meas
        out[j] = pd_command_k(target[j], meas, rate[j], kp[j], kd[j], limit)


class Controller:
    """Discrete PD controller; call :meth:`tick` once per control period."""

    def __init__(self, config: ControllerConfig, sea_params: list[SeaParams]):
        self.config = config
        self.resolution = np.array([0.0 if p.ideal_sensor else p.sensor_resolution
                                    for p in sea_params])
        self.kp = np.array([config.gains[j].kp for j in JOINTS])
        self.kd = np.array([config.gains[j].kd for j in JOINTS])
        self.target = np.array([config.target_pose[j] for j in JOINTS], dtype=float)
        self.period = 1.0 / config.control_rate
        self.alpha = config.filter_alpha()
        self.prev = np.zeros(3)
        self.rate = np.zeros(3)
        self.started = np.zeros(3, dtype=np.bool_)
        self.command = np.zeros(3)

    def tick(self, motor_angles, joint_angles) -> np.ndarray:
        """Read sensors and return the current per joint, held until the next tick."""
        controller_tick_k(np.asarray(motor_angles, float), np.asarray(joint_angles, float),
                          self.config.feedback_source is FeedbackSource.JOINT,
                          self.resolution, self.period, self.alpha, self.prev, self.rate,
                          self.started, self.kp, self.kd, self.target,
                          self.config.current_limit, self.command)
        return self.command.copy()


def ticks_per_control_period(control_rate: float, physics_dt: float) -> int:
    """Substeps per control tick; the rate must divide the physics rate."""
    n = round(1.0 / (control_rate * physics_dt))
    if n < 1 or abs(n * control_rate * physics_dt - 1.0) > 1e-9:
        raise ValueError(
            f"control rate {control_rate} Hz is not an integer divisor of 1/physics_dt")
    return n
