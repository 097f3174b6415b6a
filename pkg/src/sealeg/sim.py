"""Compiled simulation loop: controller ticks, physics substeps, sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .control import ControllerConfig, FeedbackSource, controller_tick_k, ticks_per_control_period
from .dynamics import (
    NQ,
    ContactParams,
    RobotModel,
    WorldState,
    _describe_fault,
    contact_force_k,
    energy_k,
    point_kinematics,
    substep,
)
from .sea import RAD2DEG, SeaParams, SimulationFault, spring_torque_k
from .trace import COLUMNS, Trace

NCOL = len(COLUMNS)
STAT_CONE = 0
STAT_LIMIT = 1  # three entries: worst excursion past a joint limit, deg
STAT_FAULT_STEP = 4
N_STATS = 5


@njit
def _record(row, t, q, v, mang, mvel, blo, hyst, hlast, locked, currents, G, P, CP):
    row[0] = t
    row[1] = q[0]
    row[2] = v[0]
    for j in range(3):
        base = 3 + 5 * j
        qdeg = q[j + 1] * RAD2DEG
        vdeg = v[j + 1] * RAD2DEG
        row[base] = qdeg
        row[base + 1] = vdeg
        row[base + 2] = mang[j] + blo[j]
        if locked[j] == 1:
            row[base + 3] = 0.0
        else:
            delta = mang[j] + blo[j] - qdeg
            # same deflection as last update: the memory does not move
            ts, _ = spring_torque_k(delta, mvel[j] - vdeg, P[j], hyst[j], delta)
            row[base + 3] = ts
        row[base + 4] = currents[j] * 1000.0
    pos = np.empty(2)
    vel = np.empty(2)
    jac = np.empty((2, NQ))
    accb = np.empty(2)
    for cpt in range(2):
        point_kinematics(q, v, 5 + cpt, G, pos, vel, jac, accb)
        fn, ft = contact_force_k(pos[1], vel[1], vel[0], CP)
        row[18 + cpt] = fn
        row[20 + cpt] = ft


@njit
def simulate_k(q, v, mang, mvel, blo, hyst, hlast, locked, clamped, fix_z,
               G, P, CP, LIM, dt, n_steps, ctrl_every, sample_every,
               use_joint_fb, resolution, alpha, kp, kd, target, ilimit,
               ext, out, energy, stats):
    """Run ``n_steps`` substeps in place. Returns 0 on success, 1 on fault."""
    currents = np.zeros(3)
    prev = np.zeros(3)
    rate = np.zeros(3)
    started = np.zeros(3, dtype=np.bool_)
    ext_tau = np.zeros(3)
    forces = np.zeros(4)
    tau_s = np.zeros(3)
    jangles = np.zeros(3)
    mangles = np.zeros(3)
    period = ctrl_every * dt
    ext_joint = int(ext[0])
    ext_s0 = int(ext[2])
    ext_s1 = int(ext[3])
    stats[STAT_CONE] = 0.0
    for j in range(3):
        stats[STAT_LIMIT + j] = 0.0
    stats[STAT_FAULT_STEP] = -1.0
    row_i = 0
    for s in range(n_steps):
        if s % ctrl_every == 0:
            for j in range(3):
                jangles[j] = q[j + 1] * RAD2DEG
                mangles[j] = mang[j] + blo[j]
            controller_tick_k(mangles, jangles, use_joint_fb, resolution, period, alpha,
                              prev, rate, started, kp, kd, target, ilimit, currents)
        if s % sample_every == 0 and row_i < out.shape[0]:
            _record(out[row_i], s * dt, q, v, mang, mvel, blo, hyst, hlast, locked,
                    currents, G, P, CP)
            energy[row_i] = energy_k(q, v, mang, mvel, blo, hyst, locked, clamped, G, P, CP, LIM)
            row_i += 1
        for j in range(3):
            ext_tau[j] = 0.0
        if ext_joint >= 0 and s >= ext_s0 and s < ext_s1:
            ext_tau[ext_joint] = ext[1]
        ok, worst = substep(q, v, mang, mvel, blo, hyst, hlast, locked, clamped, fix_z,
                            currents, ext_tau, G, P, CP, LIM, dt, forces, tau_s)
        if worst > stats[STAT_CONE]:
            stats[STAT_CONE] = worst
        for j in range(3):
            qdeg = q[j + 1] * RAD2DEG
            ex = max(qdeg - LIM[j, 1], LIM[j, 0] - qdeg)
            if ex > stats[STAT_LIMIT + j]:
                stats[STAT_LIMIT + j] = ex
        if not ok:
            stats[STAT_FAULT_STEP] = s
            return 1
    return 0


@dataclass
class ExternalTorque:
    """Torque pulse on one joint's link (e.g. a flick for free vibration)."""

    joint: int = -1
    torque: float = 0.0  # N·m
    start: float = 0.0  # s
    duration: float = 0.0  # s


@dataclass
class SimResult:
    trace: Trace
    energy: np.ndarray
    final_state: WorldState
    max_cone_ratio: float
    max_limit_excess: dict = field(default_factory=dict)


def simulate(
    state: WorldState,
    model: RobotModel,
    sea_params: list[SeaParams],
    contact: ContactParams,
    controller: ControllerConfig,
    duration: float,
    physics_dt: float = 1e-4,
    sample_rate: float = 1000.0,
    external: ExternalTorque | None = None,
) -> SimResult:
    """Integrate from ``state`` for ``duration`` seconds.

    Raises :class:`SimulationFault` naming the offending quantity and the
    time of the fault if the state becomes non-finite.
    """
    if physics_dt <= 0 or duration <= 0:
        raise ValueError("duration and physics_dt must be > 0")
    ctrl_every = ticks_per_control_period(controller.control_rate, physics_dt)
    sample_every = round(1.0 / (sample_rate * physics_dt))
    if sample_every < 1 or abs(sample_every * sample_rate * physics_dt - 1.0) > 1e-9:
        raise ValueError("sample_rate must divide the physics rate")
    n_steps = int(round(duration / physics_dt))
    n_samples = (n_steps + sample_every - 1) // sample_every

    q, v, mang, mvel, blo, hyst, hlast, locked, clamped = state.pack()
    P = np.ascontiguousarray(np.stack([p.pack() for p in sea_params]))
    resolution = np.array([0.0 if p.ideal_sensor else p.sensor_resolution for p in sea_params])
    kp = np.array([controller.gains[j].kp for j in ("hip", "knee", "ankle")], dtype=float)
    kd = np.array([controller.gains[j].kd for j in ("hip", "knee", "ankle")], dtype=float)
    target = np.array([controller.target_pose[j] for j in ("hip", "knee", "ankle")], dtype=float)
    ext = np.array([-1.0, 0.0, 0.0, 0.0])
    if external is not None and external.joint >= 0:
        ext[:] = (external.joint, external.torque, round(external.start / physics_dt),
                  round((external.start + external.duration) / physics_dt))
    out = np.zeros((n_samples, NCOL))
    energy = np.zeros(n_samples)
    stats = np.zeros(N_STATS)
    status = simulate_k(
        q, v, mang, mvel, blo, hyst, hlast, locked, clamped, bool(state.body_fixed),
        model.pack(), P, contact.pack(), model.pack_limits(), float(physics_dt), n_steps,
        ctrl_every, sample_every, controller.feedback_source is FeedbackSource.JOINT,
        resolution, controller.filter_alpha(), kp, kd, target, float(controller.current_limit),
        ext, out, energy, stats,
    )
    if status != 0:
        t_fault = state.time + (stats[STAT_FAULT_STEP] + 1) * physics_dt
        raise SimulationFault(_describe_fault(q, v, mang, mvel, t_fault))
    out[:, 0] += state.time
    final = _unpack_state(state, q, v, mang, mvel, blo, hyst, hlast, state.time + n_steps * physics_dt)
    trace = Trace(out, meta={"physics_dt": physics_dt, "sample_rate": sample_rate})
    excess = {j: float(stats[STAT_LIMIT + i]) for i, j in enumerate(("hip", "knee", "ankle"))}
    return SimResult(trace, energy, final, float(stats[STAT_CONE]), excess)


def _unpack_state(template: WorldState, q, v, mang, mvel, blo, hyst, hlast, t) -> WorldState:
    from .sea import HysteresisState, SeaState

    joints = []
    for j, old in enumerate(template.joints):
        joints.append(SeaState(
            motor_angle=float(mang[j]), motor_velocity=float(mvel[j]),
            joint_angle=float(q[j + 1] * RAD2DEG), joint_velocity=float(v[j + 1] * RAD2DEG),
            spring_mode=old.spring_mode, backlash_offset=float(blo[j]),
            hysteresis=HysteresisState(float(hyst[j]), float(hlast[j])),
        ))
    return WorldState(float(q[0]), float(v[0]), joints, t, template.contact_forces,
                      template.motor_clamped, template.body_fixed)


def lowest_foot_height(pose_deg: dict, model: RobotModel, z: float = 0.0) -> float:
    """Height of the lower of heel/toe when the hip is at ``z`` and the leg at ``pose_deg``."""
    from .dynamics import forward_kinematics

    q = [z] + [math.radians(pose_deg[j]) for j in ("hip", "knee", "ankle")]
    pts = forward_kinematics(q, model)
    return float(min(pts["heel"][1], pts["toe"][1]))
