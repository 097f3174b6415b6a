"""Uniformly sampled simulation record."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINTS = ("hip", "knee", "ankle")
JOINT_FIELDS = ("q_deg", "qd_dps", "motor_deg", "spring_nm", "i_ma")
COLUMNS = (
    ["t_s", "z_m", "zd_mps"]
    + [f"{j}_{f}" for j in JOINTS for f in JOINT_FIELDS]
    + ["fn_heel_n", "fn_toe_n", "ft_heel_n", "ft_toe_n"]
)
COL = {name: i for i, name in enumerate(COLUMNS)}


@dataclass
class Trace:
    """Samples in a (n, len(COLUMNS)) array plus event markers.

    ``events`` maps a marker name (``"touchdown"``, ``"tick"``...) to times in s.
    """

    data: np.ndarray
    events: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(COLUMNS))

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    @property
    def time(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def sample_period(self) -> float:
        t = self.time
        if len(t) < 2:
            return float("nan")
        return float(t[1] - t[0])

    def joint(self, joint: str, quantity: str) -> np.ndarray:
        return self[f"{joint}_{quantity}"]

    @property
    def normal_force(self) -> np.ndarray:
        return self["fn_heel_n"] + self["fn_toe_n"]

    def window(self, t0: float | None = None, t1: float | None = None) -> "Trace":
        t = self.time
        mask = np.ones(len(t), dtype=bool)
        if t0 is not None:
            mask &= t >= t0 - 1e-12
        if t1 is not None:
            mask &= t <= t1 + 1e-12
        return Trace(self.data[mask].copy(), dict(self.events), dict(self.meta))

    def check(self) -> None:
        """Raise ``ValueError`` if time is not strictly increasing and uniform."""
        t = self.time
        if len(t) < 2:
            return
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("trace time must be strictly increasing")
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(t[-1])):
            raise ValueError("trace sample period is not uniform")

    def equals(self, other: "Trace") -> bool:
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)
