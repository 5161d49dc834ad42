"""Whole-body tracking controller.

A virtual model turns CoM / attitude tracking errors into reference
accelerations, a QP distributes them over generalized accelerations and
contact forces subject to dynamic consistency, stance/swing tasks,
friction pyramids and torque caps, and the optimum maps to feed-forward
joint torques through the actuated rows of the dynamics.

The rigid-body matrices are caller-supplied (this module computes no
kinematics): unactuated rows M_base (6 x (6+n)) with bias h_base,
actuated blocks M_bj (6 x n), M_j (n x n) with bias h_j, and per-foot
contact Jacobians (3 x (6+n)). Generalized coordinates are ordered
[base linear, base angular, joints].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backends import solve_convex
from .errors import BuildError
from .micp import EQ, GE, LE, MicpProblem
from .terrain import tangent_frame


# ---------------------------------------------------------------------------
# rotation vector (log / exp)
# ---------------------------------------------------------------------------

def rotation_vector(R) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix.

    Series expansion near zero angle; the pi branch recovers the axis
    from R + I and orients it so its first nonzero component is
    positive.
    """
    R = np.asarray(R, dtype=float)
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(tr)
    vee = 0.5 * np.array([R[2, 1] - R[1, 2],
                          R[0, 2] - R[2, 0],
                          R[1, 0] - R[0, 1]])
    if theta < 1e-7:
        return vee * (1.0 + theta * theta / 6.0)
    if np.pi - theta < 1e-6:
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis = axis / np.linalg.norm(axis)
        for comp in axis:
            if abs(comp) > 1e-12:
                if comp < 0.0:
                    axis = -axis
                break
        return theta * axis
    return theta * vee / np.sin(theta)


def rotation_from_vector(v) -> np.ndarray:
    """Rodrigues map; inverse of rotation_vector for angles < pi."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    K = np.array([[0.0, -v[2], v[1]],
                  [v[2], 0.0, -v[0]],
                  [-v[1], v[0], 0.0]])
    if theta < 1e-12:
        return np.eye(3) + K
    return np.eye(3) + np.sin(theta) / theta * K \
        + (1.0 - np.cos(theta)) / theta ** 2 * (K @ K)


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass
class VirtualModelGains:
    kp_lin: np.ndarray
    kd_lin: np.ndarray
    kp_ang: np.ndarray
    kd_ang: np.ndarray

    def __post_init__(self):
        for name in ("kp_lin", "kd_lin", "kp_ang", "kd_ang"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape == ():
                arr = np.full(3, float(arr))
            if arr.shape != (3,) or np.any(arr <= 0.0):
                raise BuildError(f"{name} must be 3 positive gains")
            setattr(self, name, arr)


@dataclass
class MotionReference:
    com: np.ndarray
    com_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    com_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class WholeBodyState:
    mass: float
    com: np.ndarray
    com_vel: np.ndarray
    rot: np.ndarray                 # trunk orientation, world_R_body
    omega: np.ndarray
    q_joints: np.ndarray            # (n,)
    qd_joints: np.ndarray
    m_base: np.ndarray              # (6, 6+n) unactuated rows
    h_base: np.ndarray              # (6,)
    m_bj: np.ndarray                # (6, n) base-joint coupling block
    m_joints: np.ndarray            # (n, n)
    h_joints: np.ndarray            # (n,)
    jac_feet: np.ndarray            # (n_feet, 3, 6+n)
    contact_normal: np.ndarray      # (n_feet, 3)
    friction: np.ndarray            # (n_feet,)
    stance: list                    # indices of feet in contact
    jdot_qd: np.ndarray | None = None   # (n_feet, 3) velocity-product terms
    gravity: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        self.n_joints = len(self.q_joints)
        self.n_feet = self.jac_feet.shape[0]
        nv = 6 + self.n_joints
        if np.abs(self.rot.T @ self.rot - np.eye(3)).max() > 1e-9:
            raise BuildError("trunk rotation matrix is not orthonormal")
        shapes = {"m_base": (6, nv), "m_bj": (6, self.n_joints),
                  "m_joints": (self.n_joints, self.n_joints),
                  "h_base": (6,), "h_joints": (self.n_joints,),
                  "jac_feet": (self.n_feet, 3, nv)}
        for name, want in shapes.items():
            got = np.asarray(getattr(self, name)).shape
            if got != want:
                raise BuildError(f"{name} has shape {got}, expected {want}")
        if self.jdot_qd is None:
            self.jdot_qd = np.zeros((self.n_feet, 3))


@dataclass
class TrackingResult:
    qdd: np.ndarray        # (6+n,)
    forces: np.ndarray     # (n_feet, 3)
    status: str
    objective: float
    x: np.ndarray


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def virtual_model(desired: MotionReference, state: WholeBodyState,
                  gains: VirtualModelGains):
    """PD-style reference accelerations from tracking errors."""
    acc_lin = (np.asarray(desired.com_acc, float)
               + gains.kp_lin * (desired.com - state.com)
               + gains.kd_lin * (desired.com_vel - state.com_vel))
    rot_err = rotation_vector(np.asarray(desired.rot) @ state.rot.T)
    acc_ang = (np.asarray(desired.omega_dot, float)
               + gains.kp_ang * rot_err
               + gains.kd_ang * (desired.omega - state.omega))
    return acc_lin, acc_ang


def solve_tracking_qp(state: WholeBodyState, acc_lin_ref, acc_ang_ref,
                      track_weight=None, reg_weight=None,
                      swing_acc=None, torque_limit=None,
                      qdd_limit=None, friction_cones=True,
                      backend="reference") -> TrackingResult:
    """Distribute reference accelerations over q" and contact forces.

    min |G x - g0|^2_S + |x|^2_W  over x = [qdd, forces] subject to the
    unactuated dynamics rows, stance-foot zero acceleration, swing-foot
    acceleration tasks, friction pyramids and optional torque and
    acceleration caps. CoM acceleration is expressed through the forces
    (sum(f)/m + g), trunk angular acceleration through qdd directly.
    """
    n, nf = state.n_joints, state.n_feet
    nv = 6 + n
    if not state.stance:
        raise BuildError("tracking QP needs at least one stance foot")
    S = np.full(6, 1.0) if track_weight is None \
        else np.asarray(track_weight, dtype=float) * np.ones(6)
    W = np.full(nv + 3 * nf, 1e-6) if reg_weight is None \
        else np.asarray(reg_weight, dtype=float) * np.ones(nv + 3 * nf)
    if np.any(S < 0) or np.any(W < 0):
        raise BuildError("weights must be nonnegative")

    p = MicpProblem()
    qdd = p.add_vars("qdd", nv)
    lam = p.add_vars("f", 3 * nf)

    # tracking cost rows
    g0_lin = np.asarray(acc_lin_ref, float) - state.gravity
    for a in range(3):
        idx = [int(lam[3 * l + a]) for l in range(nf)]
        p.obj_add_square(float(S[a]),
                         (np.array(idx), np.full(nf, 1.0 / state.mass)),
                         const=-float(g0_lin[a]))
    for a in range(3):
        p.obj_add_square(float(S[3 + a]), {int(qdd[3 + a]): 1.0},
                         const=-float(np.asarray(acc_ang_ref)[a]))
    for j in range(nv + 3 * nf):
        if W[j] > 0:
            var = int(qdd[j]) if j < nv else int(lam[j - nv])
            p.obj_add_square(float(W[j]), {var: 1.0})

    # unactuated dynamics: M_base qdd + h_base = sum J_l[:, :6]^T f_l
    for row in range(6):
        terms = {int(qdd[j]): float(state.m_base[row, j])
                 for j in range(nv)}
        for l in range(nf):
            for a in range(3):
                coef = -float(state.jac_feet[l, a, row])
                if coef:
                    terms[int(lam[3 * l + a])] = \
                        terms.get(int(lam[3 * l + a]), 0.0) + coef
        p.add_linear(terms, EQ, -float(state.h_base[row]),
                     name=f"dyn[{row}]")

    # stance: J qdd = -Jdot qd; swing: J qdd = a_ref - Jdot qd, f = 0
    swing_acc = {} if swing_acc is None else dict(swing_acc)
    for l in range(nf):
        target = -state.jdot_qd[l] if l in state.stance else \
            np.asarray(swing_acc.get(l, np.zeros(3)), float) \
            - state.jdot_qd[l]
        for a in range(3):
            terms = {int(qdd[j]): float(state.jac_feet[l, a, j])
                     for j in range(nv)
                     if state.jac_feet[l, a, j] != 0.0}
            p.add_linear(terms, EQ, float(target[a]),
                         name=f"foot[{l},{a}]")
        if l not in state.stance:
            for a in range(3):
                p.add_linear({int(lam[3 * l + a]): 1.0}, EQ, 0.0,
                             name=f"swingf[{l},{a}]")

    # friction pyramids on stance feet
    if friction_cones:
        for l in state.stance:
            nrm = state.contact_normal[l]
            mu = float(state.friction[l])
            t1, t2 = tangent_frame(nrm)
            fidx = np.array([int(lam[3 * l + a]) for a in range(3)])
            p.add_linear((fidx, nrm), GE, 0.0, name=f"unilateral[{l}]")
            for tvec in (t1, t2):
                p.add_linear((fidx, tvec - mu * nrm), LE, 0.0,
                             name=f"fric[{l}]")
                p.add_linear((fidx, -tvec - mu * nrm), LE, 0.0,
                             name=f"fric[{l}]")

    # torque caps through the actuated rows
    if torque_limit is not None:
        tl = np.asarray(torque_limit, dtype=float) * np.ones(n)
        act = np.hstack([state.m_bj.T, state.m_joints])   # (n, nv)
        for j in range(n):
            terms = {int(qdd[k]): float(act[j, k]) for k in range(nv)
                     if act[j, k] != 0.0}
            for l in range(nf):
                for a in range(3):
                    coef = -float(state.jac_feet[l, a, 6 + j])
                    if coef:
                        key = int(lam[3 * l + a])
                        terms[key] = terms.get(key, 0.0) + coef
            p.add_linear(dict(terms), LE,
                         float(tl[j] - state.h_joints[j]),
                         name=f"taucap_hi[{j}]")
            p.add_linear(dict(terms), GE,
                         float(-tl[j] - state.h_joints[j]),
                         name=f"taucap_lo[{j}]")
    if qdd_limit is not None:
        ql = np.asarray(qdd_limit, dtype=float) * np.ones(n)
        for j in range(n):
            p.set_bounds(int(qdd[6 + j]), -float(ql[j]), float(ql[j]))

    sol = solve_convex(p.finalize(), backend=backend)
    if sol.status != "optimal":
        return TrackingResult(qdd=np.full(nv, np.nan),
                              forces=np.full((nf, 3), np.nan),
                              status=sol.status, objective=np.nan,
                              x=sol.x)
    return TrackingResult(qdd=sol.x[qdd], forces=sol.x[lam].reshape(nf, 3),
                          status="optimal", objective=sol.objective,
                          x=sol.x)


def feedforward_torques(state: WholeBodyState, qdd, forces) -> np.ndarray:
    """tau = [M_bj^T M_j] qdd + h_j - J_cj^T f for the actuated rows."""
    qdd = np.asarray(qdd, dtype=float)
    forces = np.asarray(forces, dtype=float).reshape(state.n_feet, 3)
    act = np.hstack([state.m_bj.T, state.m_joints])
    tau = act @ qdd + state.h_joints
    for l in range(state.n_feet):
        tau -= state.jac_feet[l, :, 6:].T @ forces[l]
    return tau


def total_command(tau_ff, q_des, qd_des, kp, kd,
                  state: WholeBodyState) -> np.ndarray:
    """Feed-forward plus joint PD feedback."""
    kp = np.asarray(kp, dtype=float) * np.ones(state.n_joints)
    kd = np.asarray(kd, dtype=float) * np.ones(state.n_joints)
    return (np.asarray(tau_ff, float)
            + kp * (np.asarray(q_des, float) - state.q_joints)
            + kd * (np.asarray(qd_des, float) - state.qd_joints))
