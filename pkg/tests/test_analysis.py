import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from sealeg.analysis import (
    InsufficientEvents,
    compute_metrics,
    detect_touchdowns,
    dominant_frequency,
    free_fall_time,
    hop_periodicity,
    integrated_current,
    peak_current,
    settling_time,
    settling_time_series,
)
from sealeg.trace import COL, COLUMNS, Trace

FS = 1000.0


def make_trace(n=1000, rate=FS, **cols):
    data = np.zeros((n, len(COLUMNS)))
    data[:, 0] = np.arange(n) / rate
    for name, values in cols.items():
        data[:, COL[name]] = values
    return Trace(data)


def sine(f, amp=1.0, seconds=4.0, rate=FS):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * f * t)


# ------------------------------------------------------------- frequency

def test_five_hertz_sine():
    assert dominant_frequency(sine(5.0), FS) == pytest.approx(5.0, abs=0.05)


def test_constant_has_no_frequency():
    assert dominant_frequency(np.full(4000, 3.0), FS) is None
    assert dominant_frequency(np.zeros(4000), FS) is None


def test_strongest_component_wins():
    x = sine(3.0) + sine(8.0, 0.2)
    assert dominant_frequency(x, FS) == pytest.approx(3.0, abs=0.05)


@given(st.floats(1.0, 50.0), st.floats(0, 2 * math.pi))
def test_pure_sine_within_one_bin(f, phase):
    t = np.arange(4000) / FS
    x = np.sin(2 * np.pi * f * t + phase)
    bin_width = FS / 4096
    assert abs(dominant_frequency(x, FS) - f) <= bin_width


# --------------------------------------------------------------- current

def test_peak_of_constant():
    assert peak_current(make_trace(10, knee_i_ma=-250.0), "knee") == -250.0


def test_peak_is_signed_extremum():
    tr = make_trace(4, knee_i_ma=[0.0, -3.0, -8.0, -5.0])
    assert peak_current(tr, "knee") == -8.0


def test_peak_tie_takes_earliest():
    tr = make_trace(4, knee_i_ma=[7.0, -7.0, 1.0, 0.0])
    assert peak_current(tr, "knee") == 7.0
    tr = make_trace(4, knee_i_ma=[-7.0, 7.0, 1.0, 0.0])
    assert peak_current(tr, "knee") == -7.0


def test_peak_in_window():
    tr = make_trace(4, knee_i_ma=[100.0, -3.0, -8.0, -5.0])
    assert peak_current(tr, "knee", (0.001, 0.003)) == -8.0
    with pytest.raises(ValueError):
        peak_current(tr, "knee", (1.0, 2.0))


def test_integrated_rectangle():
    tr = make_trace(2001, knee_i_ma=-500.0)
    assert integrated_current(tr, "knee") == pytest.approx(1.0, rel=1e-12)


currents = st.lists(st.floats(-3000, 3000), min_size=3, max_size=200)


@given(currents, st.data())
def test_integrated_additive(values, data):
    tr = make_trace(len(values), knee_i_ma=values)
    split = data.draw(st.integers(0, len(values) - 1)) / FS
    end = (len(values) - 1) / FS
    whole = integrated_current(tr, "knee")
    parts = integrated_current(tr, "knee", (0.0, split)) + integrated_current(tr, "knee", (split, end))
    assert parts == pytest.approx(whole, rel=1e-9, abs=1e-12)


@given(currents)
def test_integrated_sign_invariant_and_nonnegative(values):
    a = integrated_current(make_trace(len(values), knee_i_ma=values), "knee")
    b = integrated_current(make_trace(len(values), knee_i_ma=[-v for v in values]), "knee")
    assert a == b and a >= 0


# -------------------------------------------------------------- settling

def test_constant_settles_immediately():
    t = np.arange(1000) / FS
    assert settling_time_series(t, np.full(1000, 30.0)) == 0.0


def test_decaying_oscillation_crosses_envelope():
    amp, tau, band, f = 20.0, 0.5, 2.0, 20.0
    t_cross = tau * math.log(amp / band)
    t = np.arange(6000) / FS  # long enough that the final value is ~0
    # last peak half a millisecond before the envelope meets the band
    x = amp * np.exp(-t / tau) * np.cos(2 * np.pi * f * (t - t_cross + 5e-4))
    st_ = settling_time_series(t, x, 0.0, band, 0.2)
    assert st_ == pytest.approx(t_cross, abs=1.0 / FS)


def test_never_settling_is_flagged():
    t = np.arange(1000) / FS
    assert settling_time_series(t, 100.0 * t, 0.0, 1.0, 0.2) is None


def test_settling_measured_from_touchdown():
    n = 1000
    force = np.zeros(n)
    force[300:] = 5.0
    q = np.zeros(n)
    q[300:400] = 10.0
    tr = make_trace(n, fn_toe_n=force, knee_q_deg=q)
    assert settling_time(tr, "knee") == pytest.approx(0.1, abs=1e-9)


@given(st.lists(st.floats(-20, 20), min_size=50, max_size=300), st.floats(0.1, 10),
       st.floats(0.0, 10))
def test_settling_nonincreasing_in_band(values, band, extra):
    t = np.arange(len(values)) / FS
    a = settling_time_series(t, values, 0.0, band, 0.02)
    b = settling_time_series(t, values, 0.0, band + extra, 0.02)
    inf = float("inf")
    assert (inf if b is None else b) <= (inf if a is None else a)


# ------------------------------------------------------------ touchdowns

def test_always_airborne():
    assert detect_touchdowns(make_trace(500)) == []


def test_debounce_merges_chatter():
    f = np.zeros(1000)
    f[100:110] = 1.0
    f[115:200] = 1.0  # 5 ms gap: same stance
    f[400:500] = 1.0  # new stance
    assert detect_touchdowns(make_trace(1000, fn_heel_n=f)) == [0.1, 0.4]


def test_start_in_contact_is_not_a_touchdown():
    f = np.ones(100)
    assert detect_touchdowns(make_trace(100, fn_heel_n=f)) == []


def test_free_fall_time():
    assert free_fall_time(0.070) == pytest.approx(0.1195, abs=1e-4)


def _pulses(rate, starts, width=0.1, seconds=1.0):
    t = np.arange(int(seconds * rate)) / rate
    f = np.zeros_like(t)
    for s in starts:
        f[(t >= s) & (t < s + width)] = 3.0
    return f


@given(st.lists(st.floats(0.05, 0.8), min_size=1, max_size=3, unique=True),
       st.floats(0.0, 0.09))
def test_touchdowns_invariant_to_small_offset(starts, offset):
    starts = sorted(starts)
    assume(all(b - a > 0.15 for a, b in zip(starts, starts[1:])))
    f = _pulses(FS, starts)
    a = detect_touchdowns(make_trace(f.size, fn_toe_n=f))
    b = detect_touchdowns(make_trace(f.size, fn_toe_n=f + offset))
    assert a == b and len(a) == len(starts)


@given(st.lists(st.floats(0.05, 0.8), min_size=1, max_size=3, unique=True))
def test_touchdowns_invariant_to_sample_rate(starts):
    starts = sorted(starts)
    assume(all(b - a > 0.15 for a, b in zip(starts, starts[1:])))
    f1 = _pulses(FS, starts)
    f2 = _pulses(2 * FS, starts)
    a = detect_touchdowns(make_trace(f1.size, FS, fn_toe_n=f1))
    b = detect_touchdowns(make_trace(f2.size, 2 * FS, fn_toe_n=f2))
    assert len(a) == len(b)
    assert np.all(np.abs(np.array(a) - np.array(b)) <= 1.0 / FS + 1e-12)


# ----------------------------------------------------------- periodicity

def _hops(n_hops, period=0.2, knee_at=None, rate=FS):
    n = int(n_hops * period * rate) + 50
    t = np.arange(n) / rate
    phase = (t % period) / period
    force = np.where((phase > 0.5) & (t > 0.01), 4.0, 0.0)
    z = 0.2 + 0.02 * np.sin(2 * np.pi * phase)
    knee = 30 + 10 * np.sin(2 * np.pi * phase)
    tr = make_trace(n, rate, fn_toe_n=force, z_m=z, knee_q_deg=knee)
    if knee_at is not None:
        for time, value in knee_at.items():
            tr.data[int(round(time * rate)), COL["knee_q_deg"]] = value
    return tr


def test_periodic_trace_is_perfectly_repeatable():
    s = hop_periodicity(_hops(4))
    assert len(s.touchdowns) == 4
    assert all(v == pytest.approx(0.0, abs=1e-9) for v in s.repeatability.values())
    assert s.periods == pytest.approx([0.2] * 3)
    assert len(s.apex_heights) == 3


def test_repeatability_is_max_pairwise_difference():
    tr = _hops(2)
    td = detect_touchdowns(tr)
    q0 = tr.joint("knee", "q_deg")[int(round(td[0] * FS))]
    tr.data[int(round(td[1] * FS)), COL["knee_q_deg"]] = q0 + 3.0
    assert hop_periodicity(tr).repeatability["knee"] == pytest.approx(3.0)


def test_too_few_touchdowns():
    with pytest.raises(InsufficientEvents):
        hop_periodicity(_hops(1))


# ---------------------------------------------------------------- report

def test_report_serialisations():
    rep = compute_metrics(_hops(3))
    flat = rep.flat()
    assert flat["touchdown_count"] == 3
    text = rep.to_text()
    assert "knee.peak_current_ma = " in text
    header, row = rep.csv_header(), rep.csv_row()
    assert len(header.split(",")) == len(row.split(","))
    assert all(v["integrated_current_as"] >= 0 for v in
               ({k: getattr(m, k) for k in ("integrated_current_as",)} for m in rep.joints.values()))


def test_unsettled_reported_in_text():
    t = np.arange(500) / FS
    rep = compute_metrics(make_trace(500, knee_q_deg=100 * t))
    assert rep.joints["knee"].settling_time_s is None
    assert "knee.settling_time_s = unsettled" in rep.to_text()
