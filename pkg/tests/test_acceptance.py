"""Acceptance gate: one PASS/FAIL line per criterion (see the terminal summary)."""
import math
import time

import numpy as np
import pytest

from sealeg import cli
from sealeg.config import apply_overrides, load_config
from sealeg.control import ControllerConfig
from sealeg.dynamics import ContactParams, RobotModel, WorldState, mass_matrix
from sealeg.experiments import (
    initial_drop_state,
    landing_comparison,
    run_drop_test,
    run_natural_frequency,
)
from sealeg.analysis import detect_touchdowns, hop_periodicity
from sealeg.io import format_trace
from sealeg.sea import SPRING_PRESETS, SeaParams, SeaState, SpringMode, spring_torque
from sealeg.sim import simulate

from conftest import ACCEPTANCE_LINES, CONFIGS
from oracle_rigid import RigidChain, simulate_locked

JOINTS = ("hip", "knee", "ankle")
LOCKED = {j: SpringMode.LOCKED for j in JOINTS}
SUITE_START = time.perf_counter()


def report(n, title, checks):
    """Record the criterion line and fail the test if any sub-check failed."""
    ok = all(passed for _, passed in checks)
    detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
    ACCEPTANCE_LINES.append(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, ACCEPTANCE_LINES[-1]


@pytest.fixture(scope="module")
def landing():
    cfg = load_config(CONFIGS / "landing.toml")
    t0 = time.perf_counter()
    cmp = landing_comparison(cfg)
    elapsed = time.perf_counter() - t0
    return cfg, cmp, elapsed


@pytest.fixture(scope="module")
def hopping():
    cfg = load_config(CONFIGS / "hopping.toml")
    t0 = time.perf_counter()
    res = run_drop_test(cfg)
    return cfg, res, time.perf_counter() - t0


def _calibrate(tmp_path, cfg_path, capsys):
    out = tmp_path / (cfg_path.stem + ".csv")
    code = cli.main(["calibrate-spring", "--config", str(cfg_path), "--out", str(out)])
    text = capsys.readouterr().out
    values = dict(line.split(" = ") for line in text.strip().splitlines())
    return code, {k: float(v) for k, v in values.items()}


def test_criterion_1_spring_calibration(tmp_path, capsys):
    t0 = time.perf_counter()
    plain = tmp_path / "cal_plain.toml"
    plain.write_text((CONFIGS / "calibration.toml").read_text()
                     .replace("hysteresis_torque_nm = 0.005", "hysteresis_torque_nm = 0.0"))
    code0, r0 = _calibrate(tmp_path, plain, capsys)
    code1, r1 = _calibrate(tmp_path, CONFIGS / "calibration.toml", capsys)
    elapsed = time.perf_counter() - t0
    k = 0.012
    area = 4 * 0.005 * 40.0
    report(1, "spring calibration", [
        (f"exit codes {code0},{code1}", code0 == 0 and code1 == 0),
        (f"tau_h=0 loading k={r0['fitted_k_loading_nm_per_deg']:.5f} within 2% of {k}",
         abs(r0["fitted_k_loading_nm_per_deg"] / k - 1) <= 0.02),
        (f"tau_h=0 unloading k={r0['fitted_k_unloading_nm_per_deg']:.5f} within 2%",
         abs(r0["fitted_k_unloading_nm_per_deg"] / k - 1) <= 0.02),
        (f"tau_h=0.005 fits {r1['fitted_k_unloading_nm_per_deg']:.5f} < {k} < "
         f"{r1['fitted_k_loading_nm_per_deg']:.5f}",
         r1["fitted_k_unloading_nm_per_deg"] < k < r1["fitted_k_loading_nm_per_deg"]),
        (f"loop area {r1['loop_area_nm_deg']:.4f} within 5% of {area}",
         abs(r1["loop_area_nm_deg"] / area - 1) <= 0.05),
        (f"runtime {elapsed:.2f} s < 10 s", elapsed < 10.0),
    ])


def test_criterion_2_spring_extremes():
    p = SeaParams(spring_k=SPRING_PRESETS["design"], hysteresis_torque=0.0)
    plus = spring_torque(40.0, 0.0, p)[0]
    minus = spring_torque(-40.0, 0.0, p)[0]
    report(2, "spring extremes", [
        (f"tau(+40 deg) = {plus!r} == 0.6", plus == 0.6),
        (f"tau(-40 deg) = {minus!r} == -0.6", minus == -0.6),
    ])


def test_criterion_3_natural_frequency():
    t0 = time.perf_counter()
    reduced = load_config(CONFIGS / "natural_freq_reduced.toml")
    _, f_red = run_natural_frequency(reduced)
    k_rad = reduced.sea["knee"].spring_k * 180.0 / math.pi
    f_ref = math.sqrt(k_rad / reduced.natural_freq.reduced_inertia) / (2 * math.pi)
    full = load_config(CONFIGS / "natural_freq.toml")
    f = {j: run_natural_frequency(full, j)[1] for j in JOINTS}
    elapsed = time.perf_counter() - t0
    report(3, "natural frequency", [
        (f"reduced {f_red:.4f} Hz vs analytic {f_ref:.4f} Hz within 2%",
         abs(f_red / f_ref - 1) <= 0.02),
        (f"hip {f['hip']:.2f} < knee {f['knee']:.2f} < ankle {f['ankle']:.2f} Hz",
         f["hip"] < f["knee"] < f["ankle"]),
        (f"runtime {elapsed:.2f} s < 10 s", elapsed < 10.0),
    ])


def test_criterion_4_landing_comparison(landing):
    cfg, cmp, elapsed = landing
    lk, ac = cmp["locked"], cmp["active"]
    ratio = abs(ac["peak_current_ma"]) / abs(lk["peak_current_ma"])
    st_l, st_a = lk["settling_time_s"], ac["settling_time_s"]
    report(4, "landing comparison at 70 mm", [
        (f"(a) |peak knee current| active {ac['peak_current_ma']:.0f} mA vs locked "
         f"{lk['peak_current_ma']:.0f} mA, ratio {ratio:.3f} <= 0.8", ratio <= 0.8),
        (f"(b) peak knee deflection {ac['max_deflection_deg']:.1f} deg in [10, 30]",
         10.0 <= ac["max_deflection_deg"] <= 30.0),
        (f"(c) settling active {st_a} s > locked {st_l} s",
         st_l is not None and (st_a is None or st_a > st_l)),
        (f"(d) integrated current active {ac['integrated_current_as']:.4f} A*s > locked "
         f"{lk['integrated_current_as']:.4f} A*s",
         ac["integrated_current_as"] > lk["integrated_current_as"]),
        (f"runtime {elapsed:.2f} s < 30 s", elapsed < 30.0),
    ])


def test_criterion_5_hopping(hopping):
    cfg, res, elapsed = hopping
    stats = hop_periodicity(res.trace, cfg.output.force_threshold)
    rep = stats.repeatability
    hip_locked = cfg.spring_modes["hip"] is SpringMode.LOCKED and np.array_equal(
        res.trace.joint("hip", "motor_deg"), res.trace.joint("hip", "q_deg"))
    report(5, "hopping", [
        (f"{len(stats.touchdowns)} touchdowns >= 3", len(stats.touchdowns) >= 3),
        ("repeatability " + ", ".join(f"{j} {rep[j]:.2f}" for j in JOINTS) + " deg <= 3",
         all(rep[j] <= 3.0 for j in JOINTS)),
        ("hip spring locked", hip_locked),
        (f"runtime {elapsed:.2f} s < 30 s", elapsed < 30.0),
    ])


def _ballistic_drift():
    model = RobotModel()
    seas = [SeaParams(back_drive_torque=0.0, motor_damping=0.0, hysteresis_torque=0.0)
            for _ in JOINTS]
    worst = 0.0
    for mode in (SpringMode.LOCKED, SpringMode.ACTIVE):
        joints = [SeaState(motor_angle=a, joint_angle=a, joint_velocity=w, motor_velocity=w,
                           spring_mode=mode)
                  for a, w in zip((-30.0, 60.0, -35.0), (100.0, -150.0, 200.0))]
        res = simulate(WorldState(6.0, 0.0, joints), model, seas, ContactParams(),
                       ControllerConfig(), 1.0, 1e-4)
        e = res.energy
        worst = max(worst, float(np.max(np.abs(e - e[0])) / abs(e[0])))
    return worst


def test_criterion_6_physics_validity(landing, hopping):
    drift = _ballistic_drift()

    model = RobotModel()
    rng = np.random.default_rng(6)
    spd = True
    for _ in range(1000):
        q = [rng.uniform(-1, 1)] + [math.radians(rng.uniform(*model.joint_limits[j])) for j in JOINTS]
        M = mass_matrix(q, model)
        spd &= bool(np.array_equal(M, M.T) and np.linalg.eigvalsh(M).min() > 0)

    cfg_l, cmp, _ = landing
    cfg_h, hop, _ = hopping
    runs = {
        "landing locked": run_drop_test(cfg_l, LOCKED),
        "landing active": run_drop_test(cfg_l),
        "hopping": hop,
        "standing": run_drop_test(apply_overrides(cfg_l, {"experiment.drop_height_m": 0.0})),
    }
    cone = max(r.max_cone_ratio for r in runs.values())
    excess = max(max(r.max_limit_excess.values()) for r in runs.values())

    state = initial_drop_state(cfg_l, LOCKED)
    main = runs["landing locked"].trace
    _, q_ref, _ = simulate_locked(RigidChain(cfg_l.robot), state.q(), state.qd(),
                                  cfg_l.sea_list(), cfg_l.contact, cfg_l.controller,
                                  cfg_l.duration, cfg_l.physics_dt / 2)
    err = np.column_stack([main.joint(j, "q_deg") for j in JOINTS]) - q_ref
    rms = np.sqrt(np.mean(err ** 2, axis=0))

    report(6, "physics validity", [
        (f"ballistic energy drift {drift:.2e} per s < 1e-3", drift < 1e-3),
        ("M(q) symmetric positive definite on 1000 poses", spd),
        (f"worst |Ft|/(mu Fn) over all substeps {cone:.12f} <= 1", cone <= 1.0 + 1e-9),
        (f"worst joint-limit excursion {excess:.3f} deg <= 1", excess <= 1.0),
        ("locked drop vs rigid oracle RMS " + ", ".join(f"{j} {r:.4f}" for j, r in zip(JOINTS, rms))
         + " deg < 0.1 over 1 s", bool(np.all(rms < 0.1)) and main.time[-1] >= 0.999 - 1e-9),
    ])


def test_criterion_7_determinism_and_runtime(landing, hopping):
    checks = []
    for name in ("landing.toml", "hopping.toml"):
        cfg = load_config(CONFIGS / name)
        a = format_trace(run_drop_test(cfg).trace)
        b = format_trace(run_drop_test(load_config(CONFIGS / name)).trace)
        checks.append((f"{name} traces byte-identical", a == b))
    cfg_l, cmp, _ = landing
    again = landing_comparison(cfg_l)
    checks.append(("landing pair byte-identical", all(
        format_trace(again["traces"][k]) == format_trace(cmp["traces"][k]) for k in ("locked", "active"))))
    elapsed = time.perf_counter() - SUITE_START
    checks.append((f"acceptance suite {elapsed:.1f} s < 300 s", elapsed < 300.0))
    report(7, "determinism and runtime", checks)
