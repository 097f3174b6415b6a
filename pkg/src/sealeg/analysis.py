"""Signal analysis and landing/hopping metrics over :class:`Trace` records."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .trace import JOINTS, Trace


class InsufficientEvents(ValueError):
    """Not enough touchdowns for a periodicity analysis."""


UNSETTLED = None


def dominant_frequency(signal, sample_rate: float) -> float | None:
    """Frequency (Hz) of the strongest non-DC spectral peak, or ``None``.

    The mean is removed and the record zero-padded to the next power of two.
    The peak bin is refined from its two neighbours with the complex
    three-bin estimator ``Re[(X[k-1] - X[k+1]) / (2X[k] - X[k-1] - X[k+1])]``.
    Fitting a parabola to the magnitudes alone is biased by up to a quarter
    bin for an unwindowed record; this form is not.  No taper is applied
    because a ring-down carries most of its energy at the start.
    """
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    if x.size < 4 or not np.any(np.abs(x) > 1e-12 * max(1.0, np.max(np.abs(signal)))):
        return None
    n = 1 << (x.size - 1).bit_length()
    spec = np.fft.rfft(x, n)
    mag = np.abs(spec)
    k = int(np.argmax(mag[1:])) + 1  # argmax keeps the first, i.e. lowest, of ties
    if mag[k] <= 0.0:
        return None
    offset = 0.0
    if 1 <= k < mag.size - 1:
        den = 2.0 * spec[k] - spec[k - 1] - spec[k + 1]
        if den != 0.0:
            offset = float(np.real((spec[k - 1] - spec[k + 1]) / den))
            offset = min(0.5, max(-0.5, offset))
    return (k + offset) * sample_rate / n


def _window_mask(trace: Trace, window) -> np.ndarray:
    t = trace.time
    if window is None:
        return np.ones(len(t), dtype=bool)
    t0, t1 = window
    mask = np.ones(len(t), dtype=bool)
    if t0 is not None:
        mask &= t >= t0 - 1e-12
    if t1 is not None:
        mask &= t <= t1 + 1e-12
    return mask


def peak_current(trace: Trace, joint: str, window=None) -> float:
    """Signed sample of largest magnitude (mA); earliest sample wins ties."""
    i = trace.joint(joint, "i_ma")[_window_mask(trace, window)]
    if i.size == 0:
        raise ValueError("empty window")
    return float(i[int(np.argmax(np.abs(i)))])


def integrated_current(trace: Trace, joint: str, window=None) -> float:
    """Trapezoidal integral of |current| over the window, in A·s."""
    mask = _window_mask(trace, window)
    i = np.abs(trace.joint(joint, "i_ma")[mask]) / 1000.0
    t = trace.time[mask]
    if i.size < 2:
        return 0.0
    return float(np.sum(0.5 * (i[1:] + i[:-1]) * np.diff(t)))


def settling_time_series(t, x, start: float = 0.0, band: float = 2.0, hold: float = 0.2):
    """Seconds from ``start`` until ``x`` stays within ``band`` of its final value.

    The final value is the mean over the last ``hold`` seconds.  Returns
    ``UNSETTLED`` (``None``) if the remaining record after the settling point
    is shorter than ``hold``.
    """
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    sel = t >= start - 1e-12
    t, x = t[sel], x[sel]
    if t.size == 0:
        return UNSETTLED
    tail = t >= t[-1] - hold - 1e-12
    final = x[tail].mean()
    outside = np.nonzero(np.abs(x - final) > band)[0]
    k = 0 if outside.size == 0 else outside[-1] + 1
    if k >= t.size or t[-1] - t[k] < hold - 1e-9:
        return UNSETTLED
    return float(t[k] - start)


def settling_time(trace: Trace, joint: str, band: float = 2.0, hold: float = 0.2,
                  start: float | None = None, window=None):
    """Joint-angle settling time after ``start`` (default: first touchdown)."""
    tr = trace if window is None else trace.window(*window)
    if start is None:
        td = detect_touchdowns(tr)
        start = td[0] if td else float(tr.time[0])
    return settling_time_series(tr.time, tr.joint(joint, "q_deg"), start, band, hold)


def detect_touchdowns(trace: Trace, force_threshold: float = 0.1, debounce: float = 0.02) -> list[float]:
    """Times where the total normal force rises through ``force_threshold``.

    A rising edge only counts after at least ``debounce`` seconds below the
    threshold, so contact chatter inside one stance is not a new touchdown.
    A record that starts in contact does not report a touchdown at t0.
    """
    f = trace.normal_force
    t = trace.time
    if f.size == 0:
        return []
    touching = f > force_threshold
    out = []
    below_since = None if touching[0] else t[0]
    for k in range(1, f.size):
        if touching[k] and not touching[k - 1]:
            if below_since is not None and t[k] - below_since >= debounce - 1e-12:
                out.append(float(t[k]))
            below_since = None
        elif not touching[k] and touching[k - 1]:
            below_since = t[k]
    return out


@dataclass
class HopStats:
    touchdowns: list
    repeatability: dict  # deg, max pairwise difference of joint angle at touchdown
    periods: list  # s between touchdowns
    apex_heights: list  # m, max body height between consecutive touchdowns


def hop_periodicity(trace: Trace, force_threshold: float = 0.1, touchdowns=None) -> HopStats:
    td = detect_touchdowns(trace, force_threshold) if touchdowns is None else list(touchdowns)
    if len(td) < 2:
        raise InsufficientEvents(f"need at least 2 touchdowns, found {len(td)}")
    t = trace.time
    idx = [int(np.searchsorted(t, x - 1e-12)) for x in td]
    rep = {}
    for j in JOINTS:
        q = trace.joint(j, "q_deg")[idx]
        rep[j] = float(max(abs(a - b) for a, b in combinations(q, 2)))
    z = trace["z_m"]
    apex = [float(z[a:b + 1].max()) for a, b in zip(idx[:-1], idx[1:])]
    return HopStats(td, rep, [float(b - a) for a, b in zip(td[:-1], td[1:])], apex)


@dataclass
class JointMetrics:
    peak_current_ma: float
    integrated_current_as: float
    settling_time_s: float | None
    max_spring_deflection_deg: float


@dataclass
class MetricsReport:
    joints: dict
    touchdowns: list = field(default_factory=list)
    apex_heights: list = field(default_factory=list)
    repeatability: dict | None = None
    window: tuple = (None, None)

    def flat(self) -> dict:
        """Flat key/value view used for text and CSV output."""
        out = {"window_t0_s": self.window[0], "window_t1_s": self.window[1]}
        for j, m in self.joints.items():
            for k, v in asdict(m).items():
                out[f"{j}.{k}"] = v
        out["touchdown_count"] = len(self.touchdowns)
        out["touchdowns_s"] = ";".join(f"{x:.4f}" for x in self.touchdowns)
        out["apex_heights_m"] = ";".join(f"{x:.5f}" for x in self.apex_heights)
        for j in JOINTS:
            out[f"{j}.touchdown_repeatability_deg"] = (
                None if self.repeatability is None else self.repeatability[j])
        return out

    def to_text(self) -> str:
        lines = []
        for k, v in self.flat().items():
            if v is None:
                v = "unsettled" if k.endswith("settling_time_s") else "none"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def csv_header(self) -> str:
        return ",".join(self.flat().keys())

    def csv_row(self) -> str:
        return ",".join("" if v is None else str(v) for v in self.flat().values())


def compute_metrics(trace: Trace, window=None, band: float = 2.0, hold: float = 0.2,
                    force_threshold: float = 0.1) -> MetricsReport:
    """All per-joint and global metrics; the window defaults to the whole trace."""
    if window is None:
        window = (float(trace.time[0]), float(trace.time[-1])) if len(trace) else (None, None)
    tr = trace.window(*window)
    td = detect_touchdowns(tr, force_threshold)
    start = td[0] if td else (float(tr.time[0]) if len(tr) else 0.0)
    joints = {}
    for j in JOINTS:
        defl = tr.joint(j, "motor_deg") - tr.joint(j, "q_deg")
        joints[j] = JointMetrics(
            peak_current_ma=peak_current(tr, j) if len(tr) else 0.0,
            integrated_current_as=integrated_current(tr, j),
            settling_time_s=settling_time_series(tr.time, tr.joint(j, "q_deg"), start, band, hold),
            max_spring_deflection_deg=float(np.max(np.abs(defl))) if defl.size else 0.0,
        )
    rep = None
    apex = []
    if len(td) >= 2:
        stats = hop_periodicity(tr, force_threshold, td)
        rep, apex = stats.repeatability, stats.apex_heights
    return MetricsReport(joints, td, apex, rep, tuple(window))


def free_fall_time(height: float, g: float = 9.81) -> float:
    return math.sqrt(2.0 * height / g)
