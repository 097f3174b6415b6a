"""Planar Body/Hip/Knee/Ankle chain on a vertical slider.

Generalised coordinates are ``q = [z, hip, knee, ankle]`` with ``z`` the
hip-joint height in metres and joint angles in radians.  Link directions use
``d(phi) = (-sin phi, -cos phi)`` so that every joint range in the robot's
joint table is expressed in its own sign convention: negative hip swings the
thigh forward, positive knee flexes, positive ankle lowers the toe.

Integration is semi-implicit Euler.  Velocity-dependent dissipative forces
that are stiff at the default step (contact friction, stop and limit
dampers, locked-gear friction) are linearised and taken implicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .sea import (
    DEG2RAD,
    P_BACKDRIVE,
    P_BM,
    P_EPS_V,
    P_JR,
    P_HYST,
    P_HYST_SLIP,
    P_K,
    P_STOP_C,
    P_STOP_K,
    P_TRAVEL,
    RAD2DEG,
    HysteresisState,
    SeaParams,
    SeaState,
    SimulationFault,
    SpringMode,
    motor_available_torque_k,
    motor_step_k,
    spring_torque_k,
    stop_engaged_k,
)

JOINTS = ("hip", "knee", "ankle")
NQ = 4

# packed geometry layout
G_L1, G_L2, G_L3, G_HEEL, G_TOE = 0, 1, 2, 3, 4
G_MBODY, G_M1, G_M2, G_M3 = 5, 6, 7, 8
G_C1, G_C2, G_C3 = 9, 10, 11
G_I1, G_I2, G_I3 = 12, 13, 14
G_GRAV = 15
N_GEOM = 16

# packed contact layout
C_K, C_D, C_MU, C_VREG = 0, 1, 2, 3

HEEL, TOE = 0, 1


@dataclass
class Link:
    mass: float  # kg
    length: float  # m
    com_offset: float  # m from the proximal joint along the link
    inertia: float  # kg·m² about the COM


def _rod(mass: float, length: float) -> Link:
    return Link(mass, length, 0.5 * length, mass * length**2 / 12.0)


@dataclass
class RobotModel:
    """Masses from the robot's joint table; lengths and inertias are assumptions."""

    body_mass: float = 0.1320
    thigh: Link = field(default_factory=lambda: _rod(0.1074, 0.075))
    shank: Link = field(default_factory=lambda: _rod(0.1070, 0.075))
    foot: Link = field(default_factory=lambda: _rod(0.0676, 0.035))
    heel_offset: float = 0.030  # m behind the ankle projection
    toe_offset: float = 0.030  # m ahead of the ankle projection
    joint_limits: dict = field(
        default_factory=lambda: {"hip": (-93.0, 37.0), "knee": (-1.5, 127.0), "ankle": (-82.0, 37.0)}
    )
    limit_stiffness: float = 2.0  # N·m/deg
    limit_damping: float = 0.01  # N·m·s/deg
    gravity: float = 9.81

    @property
    def total_mass(self) -> float:
        return self.body_mass + self.thigh.mass + self.shank.mass + self.foot.mass

    @property
    def leg_length(self) -> float:
        return self.thigh.length + self.shank.length + self.foot.length

    def validate(self) -> None:
        for name, link in (("thigh", self.thigh), ("shank", self.shank), ("foot", self.foot)):
            if link.mass <= 0 or link.length <= 0 or link.inertia <= 0:
                raise ValueError(f"robot.{name}: mass, length and inertia must be > 0")
        if self.body_mass <= 0:
            raise ValueError("robot.body_mass must be > 0")
        for j in JOINTS:
            lo, hi = self.joint_limits[j]
            if not lo < hi:
                raise ValueError(f"robot.{j}: joint limits must satisfy lower < upper")

    def pack(self) -> np.ndarray:
        g = np.zeros(N_GEOM)
        g[G_L1], g[G_L2], g[G_L3] = self.thigh.length, self.shank.length, self.foot.length
        g[G_HEEL], g[G_TOE] = self.heel_offset, self.toe_offset
        g[G_MBODY], g[G_M1], g[G_M2], g[G_M3] = (
            self.body_mass, self.thigh.mass, self.shank.mass, self.foot.mass)
        g[G_C1], g[G_C2], g[G_C3] = self.thigh.com_offset, self.shank.com_offset, self.foot.com_offset
        g[G_I1], g[G_I2], g[G_I3] = self.thigh.inertia, self.shank.inertia, self.foot.inertia
        g[G_GRAV] = self.gravity
        return g

    def pack_limits(self) -> np.ndarray:
        lim = np.zeros((3, 4))
        for j, name in enumerate(JOINTS):
            lo, hi = self.joint_limits[name]
            lim[j] = (lo, hi, self.limit_stiffness, self.limit_damping)
        return lim


@dataclass
class ContactParams:
    normal_stiffness: float = 5000.0  # N/m
    normal_damping: float = 50.0  # N·s/m
    friction_mu: float = 0.8
    tangential_reg_velocity: float = 1.0e-3  # m/s

    def validate(self) -> None:
        if self.normal_stiffness <= 0 or self.normal_damping < 0:
            raise ValueError("contact stiffness must be > 0 and damping >= 0")
        if self.friction_mu < 0:
            raise ValueError("contact.friction_mu must be >= 0")
        if self.tangential_reg_velocity <= 0:
            raise ValueError("contact.tangential_reg_velocity must be > 0")

    def pack(self) -> np.ndarray:
        return np.array([self.normal_stiffness, self.normal_damping,
                         self.friction_mu, self.tangential_reg_velocity])


# ------------------------------------------------------------ kinematics


@njit
def _point_offsets(idx, G):
    """(link, along, across) for the named point. 0..2 = COM of thigh/shank/foot,
    3 knee, 4 ankle, 5 heel, 6 toe, 7 hip."""
    if idx == 0:
        return 0, G[G_C1], 0.0
    if idx == 1:
        return 1, G[G_C2], 0.0
    if idx == 2:
        return 2, G[G_C3], 0.0
    if idx == 3:
        return 0, G[G_L1], 0.0
    if idx == 4:
        return 1, G[G_L2], 0.0
    if idx == 5:
        return 2, G[G_L3], -G[G_HEEL]
    if idx == 6:
        return 2, G[G_L3], G[G_TOE]
    return -1, 0.0, 0.0


@njit
def point_kinematics(q, v, idx, G, pos, vel, jac, accb):
    """Position, velocity, Jacobian (2x4) and dJ/dt·v of a chain point."""
    link, along, across = _point_offsets(idx, G)
    pos[0] = 0.0
    pos[1] = q[0]
    for r in range(2):
        for c in range(NQ):
            jac[r, c] = 0.0
        accb[r] = 0.0
    jac[1, 0] = 1.0
    phi = 0.0
    omega = 0.0
    for m in range(link + 1):
        phi += q[m + 1]
        omega += v[m + 1]
        if m < link:
            a = G[G_L1 + m]
            b = 0.0
        else:
            a = along
            b = across
        s = math.sin(phi)
        c = math.cos(phi)
        # a*d + b*f with d = (-s, -c), f = (c, -s)
        tx = -a * s + b * c
        ty = -a * c - b * s
        # derivative wrt phi: -a*f + b*d
        dx = -a * c - b * s
        dy = a * s - b * c
        pos[0] += tx
        pos[1] += ty
        for j in range(1, m + 2):
            jac[0, j] += dx
            jac[1, j] += dy
        accb[0] -= tx * omega * omega
        accb[1] -= ty * omega * omega
    vel[0] = jac[0, 0] * v[0] + jac[0, 1] * v[1] + jac[0, 2] * v[2] + jac[0, 3] * v[3]
    vel[1] = jac[1, 0] * v[0] + jac[1, 1] * v[1] + jac[1, 2] * v[2] + jac[1, 3] * v[3]


@njit
def mass_and_bias(q, v, G, M, h):
    """Fill M (4x4) and h = -(C v + gravity), the generalised force vector."""
    pos = np.empty(2)
    vel = np.empty(2)
    jac = np.empty((2, NQ))
    accb = np.empty(2)
    grav = G[G_GRAV]
    for r in range(NQ):
        h[r] = 0.0
        for c in range(NQ):
            M[r, c] = 0.0
    mb = G[G_MBODY]
    M[0, 0] += mb
    h[0] -= mb * grav
    for k in range(3):
        m = G[G_M1 + k]
        inertia = G[G_I1 + k]
        point_kinematics(q, v, k, G, pos, vel, jac, accb)
        for r in range(NQ):
            for c in range(NQ):
                M[r, c] += m * (jac[0, r] * jac[0, c] + jac[1, r] * jac[1, c])
            h[r] -= m * (jac[0, r] * accb[0] + jac[1, r] * accb[1]) + m * grav * jac[1, r]
        for r in range(1, k + 2):
            for c in range(1, k + 2):
                M[r, c] += inertia


@njit
def coriolis_matrix(q, v, G, C):
    """C with C v = Coriolis/centrifugal terms and dM/dt - 2C skew-symmetric."""
    for r in range(NQ):
        for c in range(NQ):
            C[r, c] = 0.0
    for k in range(3):
        m = G[G_M1 + k]
        link, along, _ = _point_offsets(k, G)
        jac = np.zeros((2, NQ))
        jac[1, 0] = 1.0
        jd = np.zeros((2, NQ))
        phi = 0.0
        omega = 0.0
        for mm in range(link + 1):
            phi += q[mm + 1]
            omega += v[mm + 1]
            a = G[G_L1 + mm] if mm < link else along
            s = math.sin(phi)
            c = math.cos(phi)
            for j in range(1, mm + 2):
                jac[0, j] += -a * c
                jac[1, j] += a * s
                jd[0, j] += a * s * omega
                jd[1, j] += a * c * omega
        for r in range(NQ):
            for c2 in range(NQ):
                C[r, c2] += m * (jac[0, r] * jd[0, c2] + jac[1, r] * jd[1, c2])


@njit
def contact_force_k(height, vz, vx, CP):
    """Penalty normal force and regularised Coulomb friction at one point."""
    if height >= 0.0:
        return 0.0, 0.0
    fn = CP[C_K] * (-height) - CP[C_D] * vz
    if fn <= 0.0:
        return 0.0, 0.0
    ft = -CP[C_MU] * fn * math.tanh(vx / CP[C_VREG])
    return fn, ft


@njit
def joint_limit_k(angle, rate, lo, hi, k, c):
    """Restoring torque (N·m) beyond [lo, hi]; angle in deg, rate deg/s."""
    if angle > hi:
        tau = -(k * (angle - hi) + c * rate)
        return tau if tau < 0.0 else 0.0
    if angle < lo:
        tau = -(k * (angle - lo) + c * rate)
        return tau if tau > 0.0 else 0.0
    return 0.0


# -------------------------------------------------------------- substep

# flags per joint
MODE_ACTIVE = 0
MODE_LOCKED = 1


@njit
def substep(q, v, mang, mvel, blo, hyst, hlast, locked, clamped, fix_z,
            currents, ext_tau, G, P, CP, LIM, dt, forces, tau_s):
    """Advance the world one step in place.

    ``forces`` receives (fn_heel, fn_toe, ft_heel, ft_toe) as applied;
    ``tau_s`` the spring torques.  Returns (ok, worst friction-cone ratio).

    Gear friction of locked joints is stick/slip: a joint slower than the
    stiction velocity is first held (velocity constraint) and released to
    sliding friction only if the holding torque would exceed the back-drive
    torque.  Contact friction is linearised and implicit, falling back to
    its saturated value where the linearisation leaves the cone.
    """
    M = np.empty((NQ, NQ))
    f = np.empty(NQ)
    mass_and_bias(q, v, G, M, f)
    D = np.zeros((NQ, NQ))

    # per locked joint: 0 = free (no friction), 1 = stuck, 2 = sliding
    gear_state = np.zeros(3, dtype=np.int64)
    gear_tau = np.zeros(3)
    for j in range(3):
        qi = j + 1
        qdeg = q[qi] * RAD2DEG
        vdeg = v[qi] * RAD2DEG
        tau_s[j] = 0.0
        p = P[j]
        if locked[j] == MODE_LOCKED:
            M[qi, qi] += p[P_JR]
            tm = motor_available_torque_k(currents[j], vdeg / 6.0, p)
            f[qi] += tm - p[P_BM] * v[qi]
            D[qi, qi] -= p[P_BM]
            limit = p[P_BACKDRIVE]
            if limit > 0.0:
                if abs(vdeg) < p[P_EPS_V]:
                    gear_state[j] = 1
                else:
                    gear_state[j] = 2
                    gear_tau[j] = -limit if vdeg > 0.0 else limit
        else:
            delta = mang[j] + blo[j] - qdeg
            drate = mvel[j] - vdeg
            ts, hnew = spring_torque_k(delta, drate, p, hyst[j], hlast[j])
            tau_s[j] = ts
            hyst[j] = hnew
            hlast[j] = delta
            f[qi] += ts
            if stop_engaged_k(delta, drate, p):
                D[qi, qi] -= p[P_STOP_C] * RAD2DEG
        lim_tau = joint_limit_k(qdeg, vdeg, LIM[j, 0], LIM[j, 1], LIM[j, 2], LIM[j, 3])
        if lim_tau != 0.0:
            f[qi] += lim_tau
            D[qi, qi] -= LIM[j, 3] * RAD2DEG
        f[qi] += ext_tau[j]

    # ground contact
    pos = np.empty(2)
    vel = np.empty(2)
    jac = np.empty((2, NQ))
    accb = np.empty(2)
    jx = np.zeros((2, NQ))
    slope = np.zeros(2)
    ftc = np.zeros(2)
    fn_pt = np.zeros(2)
    for cpt in range(2):
        point_kinematics(q, v, 5 + cpt, G, pos, vel, jac, accb)
        fn, ft = contact_force_k(pos[1], vel[1], vel[0], CP)
        fn_pt[cpt] = fn
        ftc[cpt] = ft
        for c in range(NQ):
            jx[cpt, c] = jac[0, c]
            f[c] += jac[1, c] * fn + jac[0, c] * ft
        if fn > 0.0:
            th = math.tanh(vel[0] / CP[C_VREG])
            slope[cpt] = -CP[C_MU] * fn * (1.0 - th * th) / CP[C_VREG]

    sat = np.zeros(2)
    A = np.empty((NQ, NQ))
    rhs = np.empty(NQ)
    dv = np.zeros(NQ)
    for _pass in range(8):
        for r in range(NQ):
            rhs[r] = dt * f[r]
            for c in range(NQ):
                A[r, c] = M[r, c] - dt * D[r, c]
        for cpt in range(2):
            if slope[cpt] != 0.0:
                if sat[cpt] != 0.0:
                    for c in range(NQ):
                        rhs[c] += dt * jx[cpt, c] * (sat[cpt] - ftc[cpt])
                else:
                    for r in range(NQ):
                        for c in range(NQ):
                            A[r, c] -= dt * jx[cpt, r] * slope[cpt] * jx[cpt, c]
        for j in range(3):
            if gear_state[j] == 2:
                rhs[j + 1] += dt * gear_tau[j]
        # keep the unconstrained rows to recover holding torques afterwards
        A0 = A.copy()
        rhs0 = rhs.copy()
        for j in range(3):
            if gear_state[j] == 1:
                qi = j + 1
                for c in range(NQ):
                    A[qi, c] = 0.0
                A[qi, qi] = 1.0
                rhs[qi] = -v[qi]
        if fix_z:
            for c in range(NQ):
                A[0, c] = 0.0
            A[0, 0] = 1.0
            rhs[0] = -v[0]
        dv[:] = np.linalg.solve(A, rhs)
        redo = False
        for j in range(3):
            qi = j + 1
            limit = P[j][P_BACKDRIVE]
            if gear_state[j] == 1:
                hold = 0.0
                for c in range(NQ):
                    hold += A0[qi, c] * dv[c]
                hold = (hold - rhs0[qi]) / dt
                if abs(hold) > limit:
                    gear_state[j] = 2
                    gear_tau[j] = limit if hold > 0.0 else -limit
                    redo = True
            elif gear_state[j] == 2 and v[qi] != 0.0 and v[qi] * (v[qi] + dv[qi]) < 0.0:
                # sliding friction would reverse the joint: try holding instead
                gear_state[j] = 1
                redo = True
        for cpt in range(2):
            if slope[cpt] != 0.0 and sat[cpt] == 0.0:
                dvx = 0.0
                for c in range(NQ):
                    dvx += jx[cpt, c] * dv[c]
                ft_lin = ftc[cpt] + slope[cpt] * dvx
                bound = CP[C_MU] * fn_pt[cpt]
                if abs(ft_lin) > bound:
                    sat[cpt] = bound if ft_lin > 0.0 else -bound
                    redo = True
        if not redo:
            break

    worst = 0.0
    for cpt in range(2):
        if sat[cpt] != 0.0:
            ft_app = sat[cpt]
        else:
            dvx = 0.0
            for c in range(NQ):
                dvx += jx[cpt, c] * dv[c]
            ft_app = ftc[cpt] + slope[cpt] * dvx
        forces[cpt] = fn_pt[cpt]
        forces[2 + cpt] = ft_app
        if fn_pt[cpt] > 0.0 and CP[C_MU] > 0.0:
            ratio = abs(ft_app) / (CP[C_MU] * fn_pt[cpt])
            if ratio > worst:
                worst = ratio
        elif ft_app != 0.0:
            worst = 1.0e300

    # motors see the same spring torque the joints did
    ok = True
    for j in range(3):
        if locked[j] != MODE_LOCKED and not clamped[j]:
            a, w, o, good = motor_step_k(mang[j], mvel[j], blo[j], currents[j], tau_s[j], dt, P[j])
            mang[j] = a
            mvel[j] = w
            blo[j] = o
            ok = ok and good

    for r in range(NQ):
        v[r] += dv[r]
        q[r] += dt * v[r]
        if not (math.isfinite(q[r]) and math.isfinite(v[r])):
            ok = False
    for j in range(3):
        if locked[j] == MODE_LOCKED:
            mang[j] = q[j + 1] * RAD2DEG
            mvel[j] = v[j + 1] * RAD2DEG
            blo[j] = 0.0
            hyst[j] = 0.0
            hlast[j] = 0.0
    return ok, worst


@njit
def energy_k(q, v, mang, mvel, blo, hyst, locked, clamped, G, P, CP, LIM):
    """Kinetic + gravitational + spring + penalty potential energy (J)."""
    M = np.empty((NQ, NQ))
    h = np.empty(NQ)
    mass_and_bias(q, v, G, M, h)
    e = 0.0
    for r in range(NQ):
        for c in range(NQ):
            e += 0.5 * v[r] * M[r, c] * v[c]
    grav = G[G_GRAV]
    pos = np.empty(2)
    vel = np.empty(2)
    jac = np.empty((2, NQ))
    accb = np.empty(2)
    e += G[G_MBODY] * grav * q[0]
    for k in range(3):
        point_kinematics(q, v, k, G, pos, vel, jac, accb)
        e += G[G_M1 + k] * grav * pos[1]
    for j in range(3):
        p = P[j]
        qdeg = q[j + 1] * RAD2DEG
        if qdeg > LIM[j, 1]:
            e += 0.5 * LIM[j, 2] * (qdeg - LIM[j, 1]) ** 2 * DEG2RAD
        elif qdeg < LIM[j, 0]:
            e += 0.5 * LIM[j, 2] * (qdeg - LIM[j, 0]) ** 2 * DEG2RAD
        if locked[j] == MODE_LOCKED:
            e += 0.5 * p[P_JR] * v[j + 1] ** 2
            continue
        if not clamped[j]:
            e += 0.5 * p[P_JR] * (mvel[j] * DEG2RAD) ** 2
        delta = mang[j] + blo[j] - q[j + 1] * RAD2DEG
        # N·m/deg * deg^2 -> J after one deg->rad factor
        e += 0.5 * p[P_K] * delta * delta * DEG2RAD
        over = abs(delta) - p[P_TRAVEL]
        if over > 0.0:
            e += 0.5 * p[P_STOP_K] * over * over * DEG2RAD
        if p[P_HYST] > 0.0:
            sigma = p[P_HYST] / p[P_HYST_SLIP]
            e += 0.5 * hyst[j] ** 2 / sigma * DEG2RAD
    for cpt in range(2):
        point_kinematics(q, v, 5 + cpt, G, pos, vel, jac, accb)
        if pos[1] < 0.0:
            e += 0.5 * CP[C_K] * pos[1] ** 2
    return e


# ------------------------------------------------------------- public API


@dataclass
class WorldState:
    """Complete simulation state at one instant (angles in degrees)."""

    z: float
    zd: float
    joints: list  # three SeaState, hip/knee/ankle
    time: float = 0.0
    contact_forces: tuple = (0.0, 0.0, 0.0, 0.0)  # fn_heel, fn_toe, ft_heel, ft_toe
    motor_clamped: tuple = (False, False, False)
    body_fixed: bool = False

    def q(self) -> np.ndarray:
        return np.array([self.z] + [s.joint_angle * DEG2RAD for s in self.joints])

    def qd(self) -> np.ndarray:
        return np.array([self.zd] + [s.joint_velocity * DEG2RAD for s in self.joints])

    def pack(self):
        mang = np.array([s.motor_angle for s in self.joints], dtype=float)
        mvel = np.array([s.motor_velocity for s in self.joints], dtype=float)
        blo = np.array([s.backlash_offset for s in self.joints], dtype=float)
        hyst = np.array([s.hysteresis.torque for s in self.joints], dtype=float)
        hlast = np.array([s.hysteresis.last_deflection for s in self.joints], dtype=float)
        locked = np.array([1 if s.spring_mode is SpringMode.LOCKED else 0 for s in self.joints],
                          dtype=np.int64)
        clamped = np.array(self.motor_clamped, dtype=np.bool_)
        return self.q(), self.qd(), mang, mvel, blo, hyst, hlast, locked, clamped


def forward_kinematics(q, model: RobotModel) -> dict[str, np.ndarray]:
    """Positions (m) of hip, knee, ankle, heel and toe for ``q = [z, hip, knee, ankle]`` in rad."""
    G = model.pack()
    q = np.asarray(q, dtype=float)
    v = np.zeros(NQ)
    out = {"hip": np.array([0.0, q[0]])}
    pos, vel, jac, accb = np.empty(2), np.empty(2), np.empty((2, NQ)), np.empty(2)
    for name, idx in (("knee", 3), ("ankle", 4), ("heel", 5), ("toe", 6)):
        point_kinematics(q, v, idx, G, pos, vel, jac, accb)
        out[name] = pos.copy()
    return out


def point_jacobian(q, model: RobotModel, point: str) -> np.ndarray:
    idx = {"thigh_com": 0, "shank_com": 1, "foot_com": 2, "knee": 3,
           "ankle": 4, "heel": 5, "toe": 6}[point]
    pos, vel, jac, accb = np.empty(2), np.empty(2), np.empty((2, NQ)), np.empty(2)
    point_kinematics(np.asarray(q, float), np.zeros(NQ), idx, model.pack(), pos, vel, jac, accb)
    return jac.copy()


def point_velocity(q, qd, model: RobotModel, point: str) -> np.ndarray:
    return point_jacobian(q, model, point) @ np.asarray(qd, float)


def mass_matrix(q, model: RobotModel) -> np.ndarray:
    M = np.empty((NQ, NQ))
    h = np.empty(NQ)
    mass_and_bias(np.asarray(q, float), np.zeros(NQ), model.pack(), M, h)
    return M


def bias_forces(q, qd, model: RobotModel) -> np.ndarray:
    """Generalised Coriolis, centrifugal and gravity *forces*.

    Sign convention: ``M qdd = tau + bias_forces(q, qd) + contact + limits``,
    so at rest the z entry is minus the total weight.
    """
    M = np.empty((NQ, NQ))
    h = np.empty(NQ)
    mass_and_bias(np.asarray(q, float), np.asarray(qd, float), model.pack(), M, h)
    return h


def coriolis(q, qd, model: RobotModel) -> np.ndarray:
    C = np.empty((NQ, NQ))
    coriolis_matrix(np.asarray(q, float), np.asarray(qd, float), model.pack(), C)
    return C


def contact_force(point_height: float, point_velocity, params: ContactParams) -> tuple[float, float]:
    """(F_n, F_t) at a contact point; ``point_velocity`` is (vx, vz) in m/s."""
    vx, vz = point_velocity
    fn, ft = contact_force_k(float(point_height), float(vz), float(vx), params.pack())
    return float(fn), float(ft)


def joint_limit_torque(angle: float, rate: float, limits: tuple[float, float],
                       stiffness: float = 2.0, damping: float = 0.01) -> float:
    """Penalty torque pushing a joint back inside ``limits`` (deg)."""
    lo, hi = limits
    return float(joint_limit_k(float(angle), float(rate), lo, hi, stiffness, damping))


def world_step(
    state: WorldState,
    currents,
    dt: float,
    model: RobotModel,
    sea_params: list[SeaParams],
    contact: ContactParams,
    external_torques=(0.0, 0.0, 0.0),
) -> WorldState:
    """One substep of the coupled world. ``currents`` are motor commands in A."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    q, v, mang, mvel, blo, hyst, hlast, locked, clamped = state.pack()
    P = np.stack([p.pack() for p in sea_params])
    forces = np.zeros(4)
    tau_s = np.zeros(3)
    ok, _ = substep(q, v, mang, mvel, blo, hyst, hlast, locked, clamped, state.body_fixed,
                    np.asarray(currents, float), np.asarray(external_torques, float),
                    model.pack(), P, contact.pack(), model.pack_limits(), dt, forces, tau_s)
    if not ok:
        raise SimulationFault(_describe_fault(q, v, mang, mvel, state.time + dt))
    joints = []
    for j, old in enumerate(state.joints):
        joints.append(SeaState(
            motor_angle=float(mang[j]), motor_velocity=float(mvel[j]),
            joint_angle=float(q[j + 1] * RAD2DEG), joint_velocity=float(v[j + 1] * RAD2DEG),
            spring_mode=old.spring_mode, backlash_offset=float(blo[j]),
            hysteresis=HysteresisState(float(hyst[j]), float(hlast[j])),
        ))
    return WorldState(float(q[0]), float(v[0]), joints, state.time + dt,
                      tuple(float(x) for x in forces), state.motor_clamped, state.body_fixed)


def total_energy(state: WorldState, model: RobotModel, sea_params: list[SeaParams],
                 contact: ContactParams) -> float:
    q, v, mang, mvel, blo, hyst, _, locked, clamped = state.pack()
    P = np.stack([p.pack() for p in sea_params])
    return float(energy_k(q, v, mang, mvel, blo, hyst, locked, clamped,
                          model.pack(), P, contact.pack(), model.pack_limits()))


def _describe_fault(q, v, mang, mvel, t) -> str:
    names = ["z", "hip", "knee", "ankle"]
    bad = [f"q.{n}" for n, x in zip(names, q) if not math.isfinite(x)]
    bad += [f"qd.{n}" for n, x in zip(names, v) if not math.isfinite(x)]
    bad += [f"motor.{n}" for n, x in zip(JOINTS, mang) if not math.isfinite(x)]
    bad += [f"motor_velocity.{n}" for n, x in zip(JOINTS, mvel) if not math.isfinite(x)]
    return f"non-finite state at t={t:.6f} s: {', '.join(bad) or 'unknown'}"
