import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sealeg.sea import (
    SPRING_PRESETS,
    HysteresisState,
    SeaParams,
    SeaState,
    SpringMode,
    backlash_transfer,
    gear_friction_torque,
    motor_available_torque,
    sea_motor_step,
    sensor_read,
    spring_torque,
)

DESIGN = SeaParams(spring_k=SPRING_PRESETS["design"], hysteresis_torque=0.0)


# ---------------------------------------------------------------- spring

def test_full_travel_torque_is_exactly_point_six():
    assert spring_torque(40.0, 0.0, DESIGN)[0] == 0.6
    assert spring_torque(-40.0, 0.0, DESIGN)[0] == -0.6


def test_zero_deflection_gives_zero_torque():
    assert spring_torque(0.0, 0.0, DESIGN)[0] == 0.0


def test_linear_region_sign():
    assert spring_torque(-10.0, 0.0, DESIGN)[0] == pytest.approx(-0.150, abs=1e-15)


def test_hard_stop_adds_penalty_beyond_travel():
    tau, _ = spring_torque(45.0, 0.0, DESIGN)
    assert tau == pytest.approx(0.015 * 45 + DESIGN.stop_stiffness * 5.0)


def test_design_load_within_half_stall():
    p = SeaParams()
    assert SPRING_PRESETS["design"] * p.spring_travel <= p.stall_torque


@given(st.floats(-60, 60), st.floats(-500, 500), st.floats(-0.005, 0.005), st.floats(-60, 60))
def test_antisymmetry_with_mirrored_state(delta, rate, h, last):
    p = SeaParams(hysteresis_torque=0.005)
    hs = HysteresisState(h, last)
    a, ha = spring_torque(delta, rate, p, hs)
    b, hb = spring_torque(-delta, -rate, p, hs.mirrored())
    assert b == pytest.approx(-a, abs=1e-15)
    assert hb.torque == pytest.approx(-ha.torque, abs=1e-15)


@given(st.floats(-60, 0), st.floats(0.1, 120), st.integers(10, 300),
       st.floats(0.0, 0.02))
def test_monotone_under_monotone_loading(start, span, n, tau_h):
    p = SeaParams(hysteresis_torque=tau_h)
    deltas = np.linspace(start, start + span, n)
    rate = span  # deg/s for a 1 s sweep
    h = HysteresisState(0.0, deltas[0])
    out = []
    for d in deltas:
        tau, h = spring_torque(d, rate, p, h)
        out.append(tau)
    assert np.all(np.diff(out) >= -1e-12)


def _loop_area(amplitude, tau_h, dt=1e-4, rate=100.0):
    p = SeaParams(hysteresis_torque=tau_h)
    step = rate * dt
    n = int(round(amplitude / step))
    amplitude = n * step  # closed path on the step grid
    leg = np.arange(1, n + 1) * step
    # preload 0 -> +A, then one full cycle +A -> -A -> +A
    path = np.concatenate([leg, amplitude - 2 * leg, -amplitude + 2 * leg])
    h = HysteresisState(0.0, 0.0)
    taus = []
    for d in path:
        tau, h = spring_torque(d, 0.0, p, h)
        taus.append(tau)
    d = path[n - 1:]
    t = np.array(taus[n - 1:])
    return abs(float(np.sum(0.5 * (t[1:] + t[:-1]) * np.diff(d))))


@given(st.floats(5.0, 40.0), st.floats(0.001, 0.02))
def test_hysteresis_loop_area_matches_coulomb_closed_form(amplitude, tau_h):
    area = _loop_area(amplitude, tau_h)
    assert area == pytest.approx(4 * tau_h * amplitude, rel=0.01)


def test_no_hysteresis_no_loop():
    assert abs(_loop_area(40.0, 0.0)) < 1e-9


# ----------------------------------------------------------------- motor

P = SeaParams()


def test_torque_constant():
    assert motor_available_torque(1.0, 0.0, P) == pytest.approx(0.48)


def test_stall_current_reaches_stall_torque():
    assert P.stall_current == pytest.approx(1.33 / 0.48)
    assert round(P.stall_current, 3) == 2.771
    assert motor_available_torque(2.771, 0.0, P) == pytest.approx(1.33, abs=1e-9)


def test_no_load_speed_gives_zero_driving_torque():
    assert motor_available_torque(2.771, 156.5, P) == 0.0
    assert motor_available_torque(-2.771, -156.5, P) == 0.0


def test_braking_is_not_envelope_limited():
    assert motor_available_torque(1.0, -100.0, P) == pytest.approx(0.48)


@given(st.floats(-100, 100), st.floats(-1000, 1000))
def test_envelope(current, rpm):
    tau = motor_available_torque(current, rpm, P)
    assert abs(tau) <= P.stall_torque
    if abs(rpm) >= P.no_load_speed and current * rpm > 0:
        assert tau == 0.0


# --------------------------------------------------------------- backlash

def test_backlash_sweep_from_centre():
    s = SeaState()
    out = 0.0
    for a in np.linspace(0.0, 1.0, 101)[1:]:
        out, s = backlash_transfer(float(a), s, P)
    assert out == pytest.approx(0.89, abs=1e-12)


def test_zero_backlash_is_identity():
    p = replace(P, backlash=0.0)
    s = SeaState()
    for a in (0.3, -2.0, 5.5):
        out, s = backlash_transfer(a, s, p)
        assert out == a


def test_motion_inside_play_leaves_output_fixed():
    s = SeaState()
    outs = []
    for a in (0.05, -0.05, 0.05, -0.05, 0.0):
        out, s = backlash_transfer(a, s, P)
        outs.append(out)
    assert all(o == 0.0 for o in outs)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=50), st.floats(0.0, 1.0))
def test_backlash_bound(angles, backlash):
    p = replace(P, backlash=backlash)
    s = SeaState()
    for a in angles:
        out, s = backlash_transfer(a, s, p)
        assert abs(out - a) <= backlash / 2 + 1e-12
        assert abs(s.backlash_offset) <= backlash / 2 + 1e-12


# --------------------------------------------------------------- friction

def test_static_friction_holds_load():
    assert gear_friction_torque(0.0, 0.10, P) == pytest.approx(-0.10)


def test_sliding_friction():
    assert gear_friction_torque(50.0, 0.0, P) == pytest.approx(-0.135)
    assert gear_friction_torque(-50.0, 0.0, P) == pytest.approx(0.135)


def test_no_load_no_friction():
    assert gear_friction_torque(0.0, 0.0, P) == 0.0


def test_static_friction_breaks_away():
    assert gear_friction_torque(0.0, 0.2, P) == pytest.approx(-0.135)


# ----------------------------------------------------------------- sensor

def test_sensor_quantisation():
    assert sensor_read(10.044, P) == pytest.approx(114 * 0.088, abs=1e-12)
    assert sensor_read(10.044, P) == pytest.approx(10.032, abs=1e-12)


def test_sensor_exact_multiple_unchanged():
    assert sensor_read(0.088 * 7, P) == pytest.approx(0.088 * 7, abs=1e-15)


def test_ideal_sensor_identity():
    assert sensor_read(10.044, replace(P, ideal_sensor=True)) == 10.044


@given(st.floats(-180, 180))
def test_sensor_error_at_most_half_count(angle):
    assert abs(sensor_read(angle, P) - angle) <= 0.044 + 1e-12


# ------------------------------------------------------------- motor step

def test_equilibrium_is_fixed_point():
    s = SeaState()
    assert sea_motor_step(s, 0.0, 1e-4, P) == s


def test_load_exceeding_friction_back_drives_motor():
    s = SeaState(motor_angle=20.0)  # 0.24 N·m spring load against the motor
    s2 = sea_motor_step(s, 0.0, 1e-4, P)
    assert s2.motor_velocity < 0.0


def test_current_beyond_load_and_stiction_drives_motor():
    s = SeaState(motor_angle=10.0)  # spring pushes back with 0.12 N·m
    i = (0.12 + P.back_drive_torque + 0.05) / P.torque_constant
    s2 = sea_motor_step(s, i, 1e-4, P)
    assert s2.motor_velocity > 0.0


def test_locked_mode_slaves_motor_to_joint():
    s = SeaState(motor_angle=3.0, joint_angle=7.0, joint_velocity=2.0,
                 spring_mode=SpringMode.LOCKED)
    s2 = sea_motor_step(s, 1.0, 1e-4, P)
    assert s2.motor_angle == 7.0 and s2.deflection == 0.0


def test_free_motor_reaches_no_load_speed():
    # friction and damping off so the envelope alone limits speed
    p = replace(P, back_drive_torque=0.0, motor_damping=0.0)
    s = SeaState()
    for _ in range(20000):
        s = sea_motor_step(s, p.stall_current, 1e-4, p)
        s = replace(s, joint_angle=s.spring_input_angle)  # no spring load
    rpm = s.motor_velocity / 6.0
    assert rpm == pytest.approx(156.5, rel=1e-3)


def test_motor_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        sea_motor_step(SeaState(), 0.0, 0.0, P)


def test_non_finite_state_faults():
    from sealeg.sea import SimulationFault

    with pytest.raises(SimulationFault):
        sea_motor_step(SeaState(motor_velocity=math.inf), 0.0, 1e-4, P)
