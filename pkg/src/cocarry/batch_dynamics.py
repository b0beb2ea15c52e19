"""Vectorized twin of :mod:`cocarry.dynamics` stepping B worlds at once.

Training and evaluation step dozens of environments per control tick; doing
that through the single-world step() costs ~0.5 ms of Python overhead per
world. This module implements the same update rules on (B, ...) arrays.
Equivalence against the single-world integrator is covered by tests; the
single-world version remains the readable reference and serves the realtime
session (B == 1 there would add nothing).

All worlds in a batch share one SimParams / mass model, which is the case for
every caller in this package.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import (BASE_X, BASE_Y, BASE_YAW, LEG, HAND_SLICES, HAND_YAW_IDX,
                       NQ, SimParams, SimulationDiverged)

HAND_NOMINAL_AXES = (slice(4, 7), slice(8, 11))


# ---------------------------------------------------------------- quaternions

def b_normalize(q):
    return q / np.sqrt(np.sum(q * q, axis=1, keepdims=True))


def b_multiply(q1, q2):
    w1, x1, y1, z1 = q1[:, 0], q1[:, 1], q1[:, 2], q1[:, 3]
    w2, x2, y2, z2 = q2[:, 0], q2[:, 1], q2[:, 2], q2[:, 3]
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=1)


def b_conjugate(q):
    out = -q.copy()
    out[:, 0] = q[:, 0]
    return out


def b_to_matrix(q):
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    B = q.shape[0]
    R = np.empty((B, 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - z * w)
    R[:, 0, 2] = 2 * (x * z + y * w)
    R[:, 1, 0] = 2 * (x * y + z * w)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - x * w)
    R[:, 2, 0] = 2 * (x * z - y * w)
    R[:, 2, 1] = 2 * (y * z + x * w)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def b_rotate(R, v):
    return np.einsum('bij,bj->bi', R, v)


def b_rotate_T(R, v):
    return np.einsum('bji,bj->bi', R, v)


def b_exp_map(omega_dt):
    angle = np.sqrt(np.sum(omega_dt * omega_dt, axis=1))
    small = angle < 1e-10
    safe = np.where(small, 1.0, angle)
    half = 0.5 * angle
    coef = np.where(small, 0.5, np.sin(half) / safe)
    q = np.concatenate([np.cos(half)[:, None], coef[:, None] * omega_dt], axis=1)
    return b_normalize(q)


def b_integrate(q, omega_world, dt):
    return b_normalize(b_multiply(b_exp_map(omega_world * dt), q))


def b_to_rotvec(q):
    q = np.where(q[:, 0:1] < 0.0, -q, q)
    w = np.clip(q[:, 0], -1.0, 1.0)
    s2 = np.sum(q[:, 1:] * q[:, 1:], axis=1)
    small = s2 < 1e-16
    angle = 2.0 * np.arccos(w)
    coef = np.where(small, 2.0, angle / np.sqrt(np.where(small, 1.0, s2)))
    return coef[:, None] * q[:, 1:]


def b_cross(a, b):
    return np.stack([
        a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
        a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
        a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
    ], axis=1)


def b_rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    B = yaw.shape[0]
    R = np.zeros((B, 3, 3))
    R[:, 0, 0] = c
    R[:, 0, 1] = -s
    R[:, 1, 0] = s
    R[:, 1, 1] = c
    R[:, 2, 2] = 1.0
    return R


# --------------------------------------------------------------------- state

@dataclass
class BatchModel:
    """SimParams plus the mass model shared by a batch.

    object_mass may be a scalar or a per-world (B,) array (with
    object_inertia then (B, 3)); everything else is uniform.
    """

    params: SimParams
    base_mass: float = 15.0
    base_yaw_inertia: float = 1.5
    hand_point_mass: float = 0.5
    object_mass: float | np.ndarray = 5.0
    object_inertia: np.ndarray = field(default_factory=lambda: np.zeros(3))
    support_mass: float = 20.0
    support_inertia: np.ndarray = field(default_factory=lambda: np.ones(3))
    has_object: bool = True

    def mass_column(self):
        m = np.asarray(self.object_mass)
        return m[:, None] if m.ndim == 1 else m


@dataclass
class BatchWorld:
    q: np.ndarray          # (B, 12)
    qd: np.ndarray
    obj_pos: np.ndarray    # (B, 3)
    obj_quat: np.ndarray   # (B, 4)
    obj_vel: np.ndarray
    obj_ang: np.ndarray
    sup_pos: np.ndarray
    sup_quat: np.ndarray
    sup_vel: np.ndarray
    sup_ang: np.ndarray
    time: np.ndarray       # (B,)

    @staticmethod
    def zeros(B, has_object=True):
        z3 = np.zeros((B, 3))
        qid = np.zeros((B, 4))
        qid[:, 0] = 1.0
        return BatchWorld(np.zeros((B, NQ)), np.zeros((B, NQ)),
                          z3.copy(), qid.copy(), z3.copy(), z3.copy(),
                          z3.copy(), qid.copy(), z3.copy(), z3.copy(),
                          np.zeros(B))

    def copy(self):
        return BatchWorld(*[getattr(self, f).copy() for f in (
            'q', 'qd', 'obj_pos', 'obj_quat', 'obj_vel', 'obj_ang',
            'sup_pos', 'sup_quat', 'sup_vel', 'sup_ang', 'time')])


@dataclass
class BatchForces:
    pd_feedback: np.ndarray
    grasp_force_obj: np.ndarray
    grasp_stretch: np.ndarray
    grasp_broken: np.ndarray
    joint_force: np.ndarray
    joint_torque: np.ndarray


def hand_positions(model, q, R=None):
    """World positions of both hands, (B, 2, 3)."""
    if R is None:
        R = b_rot_z(q[:, BASE_YAW])
    base = np.stack([q[:, BASE_X], q[:, BASE_Y], q[:, LEG]], axis=1)
    out = np.empty((q.shape[0], 2, 3))
    for i in range(2):
        off = model.params.nominal_hand_offsets[i] + q[:, HAND_SLICES[i]]
        out[:, i] = base + b_rotate(R, off)
    return out


def hand_velocities(model, q, qd, R=None):
    if R is None:
        R = b_rot_z(q[:, BASE_YAW])
    vbase = np.stack([qd[:, BASE_X], qd[:, BASE_Y], qd[:, LEG]], axis=1)
    wz = qd[:, BASE_YAW]
    out = np.empty((q.shape[0], 2, 3))
    for i in range(2):
        off_w = b_rotate(R, model.params.nominal_hand_offsets[i] + q[:, HAND_SLICES[i]])
        spin = np.stack([-wz * off_w[:, 1], wz * off_w[:, 0], np.zeros_like(wz)], axis=1)
        out[:, i] = vbase + spin + b_rotate(R, qd[:, HAND_SLICES[i]])
    return out


def batch_step(model, world, targets, hand_forces=None, support_force_z=None,
               support_torque_z=None, dt=0.005):
    """Advance all B worlds one physics step. Mirrors dynamics.step()."""
    p = model.params
    B = world.q.shape[0]
    q, qd = world.q, world.qd
    g = p.gravity

    if hand_forces is None:
        hand_forces = np.zeros((B, 2, 3))
    if support_force_z is None:
        support_force_z = np.zeros(B)
    if support_torque_z is None:
        support_torque_z = np.zeros(B)

    targets = np.clip(targets, p.q_limit_lower, p.q_limit_upper)
    tau = p.gains.kp * (targets - q) - p.gains.kd * qd
    np.clip(tau, -p.effort_limit, p.effort_limit, out=tau)

    kp_lim = p.gains.kp * p.limit_stiffness_scale
    below = np.minimum(q - p.q_limit_lower, 0.0)
    above = np.maximum(q - p.q_limit_upper, 0.0)
    lim = -kp_lim * (below + above)
    lim = np.where(np.isfinite(lim), lim, 0.0)

    yaw = q[:, BASE_YAW]
    R = b_rot_z(yaw)
    base_pos = np.stack([q[:, BASE_X], q[:, BASE_Y], q[:, LEG]], axis=1)
    hand_p = hand_positions(model, q, R)
    hand_v = hand_velocities(model, q, qd, R)

    grasp_on_obj = np.zeros((B, 2, 3))
    stretch = np.zeros((B, 2))
    joint_f = np.zeros((B, 3))
    joint_t = np.zeros((B, 3))
    f_obj = None
    t_obj = None
    Ro = None

    if model.has_object:
        Ro = b_to_matrix(world.obj_quat)
        m_col = model.mass_column()
        f_obj = np.zeros((B, 3))
        f_obj[:, 2:3] = -m_col * g
        t_obj = np.zeros((B, 3))
        if p.grasp is not None and p.object_spec is not None:
            for i in range(2):
                r_g = b_rotate(Ro, np.broadcast_to(p.object_spec.robot_grasp_offsets[i], (B, 3)))
                p_g = world.obj_pos + r_g
                v_g = world.obj_vel + b_cross(world.obj_ang, r_g)
                delta = hand_p[:, i] - p_g
                f = p.grasp.stiffness * delta + p.grasp.damping * (hand_v[:, i] - v_g)
                grasp_on_obj[:, i] = f
                stretch[:, i] = np.sqrt(np.sum(delta * delta, axis=1))
                f_obj += f
                t_obj += b_cross(r_g, f)
        if p.joint is not None:
            Rs = b_to_matrix(world.sup_quat)
            r_s = b_rotate(Rs, np.broadcast_to(p.joint.anchor_support, (B, 3)))
            r_o = b_rotate(Ro, np.broadcast_to(p.joint.anchor_object, (B, 3)))
            a_s = world.sup_pos + r_s
            a_o = world.obj_pos + r_o
            d_world = a_o - a_s
            delta_t = b_rotate_T(Rs, d_world)
            q_rel = b_multiply(b_conjugate(world.sup_quat), world.obj_quat)
            delta_r = b_to_rotvec(q_rel)
            v_as = world.sup_vel + b_cross(world.sup_ang, r_s)
            v_ao = world.obj_vel + b_cross(world.obj_ang, r_o)
            rate_t = b_rotate_T(Rs, v_ao - v_as - b_cross(world.sup_ang, d_world))
            rate_r = b_rotate_T(Rs, world.obj_ang - world.sup_ang)
            delta6 = np.concatenate([delta_t, delta_r], axis=1)
            rate6 = np.concatenate([rate_t, rate_r], axis=1)
            excess = (np.maximum(delta6 - p.joint.limit_upper, 0.0)
                      + np.minimum(delta6 - p.joint.limit_lower, 0.0))
            load = -(p.joint.stiffness * (delta6 + p.joint.limit_stiffness_scale * excess)
                     + p.joint.damping * rate6)
            joint_f = b_rotate(Rs, load[:, :3])
            joint_t = b_rotate(Rs, load[:, 3:])
            f_obj += joint_f
            t_obj += joint_t + b_cross(r_o, joint_f)
            sup_lever_t = b_cross(r_s, -joint_f)

    # --- carrier ---
    base_force = np.zeros((B, 3))
    base_force[:, 0] = tau[:, BASE_X] + lim[:, BASE_X]
    base_force[:, 1] = tau[:, BASE_Y] + lim[:, BASE_Y]
    base_force[:, 2] = tau[:, LEG] + lim[:, LEG]
    if p.leg_gravity_ff:
        base_force[:, 2] += (model.base_mass + 2.0 * model.hand_point_mass) * g
    base_torque_z = tau[:, BASE_YAW].copy()

    m_h = model.hand_point_mass
    new_hand_p = np.empty_like(hand_p)
    new_hand_v = np.empty_like(hand_v)
    for i in range(2):
        gen = tau[:, HAND_SLICES[i]] + lim[:, HAND_SLICES[i]]
        attach = b_rotate(R, gen)
        f_hand = attach + hand_forces[:, i] - grasp_on_obj[:, i]
        f_hand[:, 2] -= m_h * g
        base_force -= attach
        r = hand_p[:, i] - base_pos
        base_torque_z -= r[:, 0] * attach[:, 1] - r[:, 1] * attach[:, 0]
        v_new = hand_v[:, i] + dt * (f_hand / m_h)
        new_hand_v[:, i] = v_new
        new_hand_p[:, i] = hand_p[:, i] + dt * v_new

    nqd = qd.copy()
    nq = q.copy()
    nqd[:, BASE_X] = qd[:, BASE_X] + dt * base_force[:, 0] / model.base_mass
    nqd[:, BASE_Y] = qd[:, BASE_Y] + dt * base_force[:, 1] / model.base_mass
    nqd[:, BASE_YAW] = qd[:, BASE_YAW] + dt * base_torque_z / model.base_yaw_inertia
    nqd[:, LEG] = qd[:, LEG] + dt * (base_force[:, 2] / model.base_mass - g)
    for c in (BASE_X, BASE_Y, BASE_YAW, LEG):
        nq[:, c] = q[:, c] + dt * nqd[:, c]
    for idx in HAND_YAW_IDX:
        alpha = (tau[:, idx] + lim[:, idx]) / p.hand_yaw_inertia
        nqd[:, idx] = qd[:, idx] + dt * alpha
        nq[:, idx] = q[:, idx] + dt * nqd[:, idx]

    new_base_pos = np.stack([nq[:, BASE_X], nq[:, BASE_Y], nq[:, LEG]], axis=1)
    new_base_vel = np.stack([nqd[:, BASE_X], nqd[:, BASE_Y], nqd[:, LEG]], axis=1)
    new_wz = nqd[:, BASE_YAW]
    Rn = b_rot_z(nq[:, BASE_YAW])
    for i in range(2):
        r = new_hand_p[:, i] - new_base_pos
        spin = np.stack([-new_wz * r[:, 1], new_wz * r[:, 0], np.zeros(B)], axis=1)
        rel_v = new_hand_v[:, i] - new_base_vel - spin
        nq[:, HAND_SLICES[i]] = b_rotate_T(Rn, r) - p.nominal_hand_offsets[i]
        nqd[:, HAND_SLICES[i]] = b_rotate_T(Rn, rel_v)

    out = world.copy()
    out.q = nq
    out.qd = nqd
    out.time = world.time + dt

    # --- object ---
    if model.has_object:
        v_new = world.obj_vel + dt * (f_obj / m_col)
        I = model.object_inertia
        L = b_rotate(Ro, I * b_rotate_T(Ro, world.obj_ang)) + dt * t_obj
        omega_mid = b_rotate(Ro, b_rotate_T(Ro, L) / I)
        q_new = b_integrate(world.obj_quat, omega_mid, dt)
        Rn_o = b_to_matrix(q_new)
        omega_new = b_rotate(Rn_o, b_rotate_T(Rn_o, L) / I)
        out.obj_vel = v_new
        out.obj_pos = world.obj_pos + dt * v_new
        out.obj_quat = q_new
        out.obj_ang = omega_new

        f_z = support_force_z - model.support_mass * g - joint_f[:, 2]
        t_z = support_torque_z - joint_t[:, 2]
        if p.joint is not None:
            t_z = t_z + sup_lever_t[:, 2]
        vz_new = world.sup_vel[:, 2] + dt * f_z / model.support_mass
        wz_new = world.sup_ang[:, 2] + dt * t_z / model.support_inertia[2]
        out.sup_vel = world.sup_vel.copy()
        out.sup_vel[:, 0:2] -= dt * joint_f[:, 0:2] / model.support_mass
        out.sup_vel[:, 2] = vz_new
        out.sup_pos = world.sup_pos + dt * out.sup_vel
        omega_sup = np.zeros((B, 3))
        omega_sup[:, 2] = wz_new
        out.sup_quat = b_integrate(world.sup_quat, omega_sup, dt)
        out.sup_ang = omega_sup

    forces = BatchForces(
        pd_feedback=tau,
        grasp_force_obj=grasp_on_obj,
        grasp_stretch=stretch,
        grasp_broken=(np.max(stretch, axis=1) > p.grasp.max_stretch)
        if (model.has_object and p.grasp is not None) else np.zeros(B, dtype=bool),
        joint_force=joint_f,
        joint_torque=joint_t,
    )

    s = float(np.sum(out.q) + np.sum(out.qd))
    if model.has_object:
        s += float(np.sum(out.obj_pos) + np.sum(out.obj_vel)
                   + np.sum(out.sup_pos) + np.sum(out.sup_vel))
    if not (s == s and abs(s) != np.inf):
        raise SimulationDiverged("batch world state")
    return out, forces


def diverged_mask(out):
    """Per-world non-finite flags, for vector envs that isolate bad worlds."""
    bad = ~np.isfinite(out.q).all(axis=1) | ~np.isfinite(out.qd).all(axis=1)
    bad |= ~np.isfinite(out.obj_pos).all(axis=1) | ~np.isfinite(out.obj_vel).all(axis=1)
    return bad
