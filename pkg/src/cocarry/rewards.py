"""Reward terms for both training stages.

Collaborative-carrying task terms (tracking kernel phi(x) = exp(-||x||)):

    lin_vel_tracking     phi(object CoM planar velocity - applied velocity)   w 1.0
    yaw_vel_tracking     phi(object yaw rate - support yaw-rate goal)         w 1.0
    z_vel_penalty        -|object vertical velocity|                          w 0.05
    height_diff_penalty  -|end-marker height difference|                      w 10.0
    force_penalty        -|horizontal support-object joint force|             w 0.002

Base whole-body terms shape stage-1 goal tracking and carry over as
regularizers in stage 2 (action rate, actuator effort, alive bonus, height).
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .dynamics import BASE_X, BASE_Y, BASE_YAW, LEG, HAND_SLICES, HAND_YAW_IDX

TASK_TERMS = ("lin_vel_tracking", "yaw_vel_tracking", "z_vel_penalty",
              "height_diff_penalty", "force_penalty")
BASE_TERMS = ("base_lin_vel_tracking", "base_yaw_vel_tracking", "base_height_tracking",
              "base_ee_pos_tracking", "base_ee_yaw_tracking",
              "action_rate_penalty", "torque_penalty", "alive_bonus")


def default_weights(cfg_rewards, stage):
    """Per-term weights for a stage ('wbc' or 'collab')."""
    r = cfg_rewards
    if stage == "wbc":
        return {
            "base_lin_vel_tracking": r.base_lin_vel_tracking,
            "base_yaw_vel_tracking": r.base_yaw_vel_tracking,
            "base_height_tracking": r.base_height_tracking,
            "base_ee_pos_tracking": r.base_ee_pos_tracking,
            "base_ee_yaw_tracking": r.base_ee_yaw_tracking,
            "action_rate_penalty": r.action_rate_penalty,
            "torque_penalty": r.torque_penalty,
            "alive_bonus": r.alive_bonus,
        }
    return {
        "lin_vel_tracking": r.lin_vel_tracking,
        "yaw_vel_tracking": r.yaw_vel_tracking,
        "z_vel_penalty": r.z_vel_penalty,
        "height_diff_penalty": r.height_diff_penalty,
        "force_penalty": r.force_penalty,
        "base_height_tracking": r.stage2_height_weight,
        "action_rate_penalty": r.action_rate_penalty,
        "torque_penalty": r.torque_penalty,
        "alive_bonus": r.alive_bonus,
    }


@dataclass
class RewardBreakdown:
    """Named unweighted terms plus their weights; total is the weighted sum."""

    terms: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(self.weights[k] * self.terms[k] for k in self.terms)


def phi(x):
    """Tracking kernel exp(-||x||)."""
    return float(np.exp(-np.linalg.norm(x)))


def batch_task_terms(obj_vel, obj_ang_z, end_heights, joint_force, v_applied, ang_goal):
    """Vectorized Table-of-task terms. All args batched arrays."""
    verr = obj_vel[:, :2] - v_applied
    lin = np.exp(-np.sqrt(np.sum(verr * verr, axis=1)))
    yawt = np.exp(-np.abs(obj_ang_z - ang_goal))
    zpen = -np.abs(obj_vel[:, 2])
    hpen = -np.abs(end_heights[:, 0] - end_heights[:, 1])
    fpen = -np.sqrt(joint_force[:, 0] ** 2 + joint_force[:, 1] ** 2)
    return {"lin_vel_tracking": lin, "yaw_vel_tracking": yawt,
            "z_vel_penalty": zpen, "height_diff_penalty": hpen,
            "force_penalty": fpen}


def batch_base_terms(q, qd, goal_vecs, action, prev_action, pd_feedback,
                     nominal_offsets, nominal_leg=0.7):
    """Vectorized base whole-body terms against the goal command vector.

    The goal height slot is relative to the nominal stance.
    """
    yaw = q[:, BASE_YAW]
    c, s = np.cos(yaw), np.sin(yaw)
    v_fwd = c * qd[:, BASE_X] + s * qd[:, BASE_Y]
    v_lat = -s * qd[:, BASE_X] + c * qd[:, BASE_Y]
    verr = np.stack([v_fwd - goal_vecs[:, 0], v_lat - goal_vecs[:, 1]], axis=1)
    lin = np.exp(-np.sqrt(np.sum(verr * verr, axis=1)) / 0.15)
    yawt = np.exp(-np.abs(qd[:, BASE_YAW] - goal_vecs[:, 2]) / 0.2)
    height = np.exp(-np.abs(q[:, LEG] - nominal_leg - goal_vecs[:, 3]) / 0.1)
    ee_pos = np.zeros(q.shape[0])
    ee_yaw = np.zeros(q.shape[0])
    for i, (sl, yi, gofs) in enumerate(((HAND_SLICES[0], HAND_YAW_IDX[0], 4),
                                        (HAND_SLICES[1], HAND_YAW_IDX[1], 8))):
        perr = q[:, sl] - goal_vecs[:, gofs:gofs + 3]
        ee_pos += 0.5 * np.exp(-np.sqrt(np.sum(perr * perr, axis=1)) / 0.1)
        ee_yaw += 0.5 * np.exp(-np.abs(q[:, yi] - goal_vecs[:, gofs + 3]))
    da = action - prev_action
    rate = -np.sum(da * da, axis=1)
    torque = -np.sum(pd_feedback * pd_feedback, axis=1)
    alive = np.ones(q.shape[0])
    return {"base_lin_vel_tracking": lin, "base_yaw_vel_tracking": yawt,
            "base_height_tracking": height, "base_ee_pos_tracking": ee_pos,
            "base_ee_yaw_tracking": ee_yaw, "action_rate_penalty": rate,
            "torque_penalty": torque, "alive_bonus": alive}


def end_marker_heights(obj_pos, obj_quat_matrix, end_markers):
    """World z of both end markers, batched -> (B, 2)."""
    out = np.empty((obj_pos.shape[0], 2))
    for i in range(2):
        out[:, i] = obj_pos[:, 2] + (obj_quat_matrix[:, 2, :] @ end_markers[i])
    return out


def compute_reward(world, goal_vec, targets, action, prev_action, weights,
                   object_spec=None, nominal_leg=0.7):
    """Single-world reward breakdown (reference path; the env uses the batched twin).

    `targets` is the SupportTargets in effect; `goal_vec` the 12-dim goal
    encoding; `action`/`prev_action` the raw policy actions.
    """
    terms = {}
    c = world.carrier
    if world.object is not None and targets is not None:
        o = world.object
        Ro = quat.to_matrix(o.orientation)
        ends = np.array([(o.position + Ro @ object_spec.end_markers[i])[2] for i in range(2)])
        f = world.forces.joint_force
        terms["lin_vel_tracking"] = phi(o.lin_vel[:2] - targets.v_applied)
        terms["yaw_vel_tracking"] = phi(o.ang_vel[2] - targets.ang_goal)
        terms["z_vel_penalty"] = -abs(float(o.lin_vel[2]))
        terms["height_diff_penalty"] = -abs(float(ends[0] - ends[1]))
        terms["force_penalty"] = -float(np.hypot(f[0], f[1]))
    q, qd = c.q, c.qd
    yaw = q[BASE_YAW]
    cy, sy = np.cos(yaw), np.sin(yaw)
    v_base = np.array([cy * qd[BASE_X] + sy * qd[BASE_Y],
                       -sy * qd[BASE_X] + cy * qd[BASE_Y]])
    base_terms = {
        "base_lin_vel_tracking": phi((v_base - goal_vec[0:2]) / 0.15),
        "base_yaw_vel_tracking": phi((qd[BASE_YAW] - goal_vec[2]) / 0.2),
        "base_height_tracking": phi((q[LEG] - nominal_leg - goal_vec[3]) / 0.1),
        "base_ee_pos_tracking": 0.5 * (phi((q[HAND_SLICES[0]] - goal_vec[4:7]) / 0.1)
                                       + phi((q[HAND_SLICES[1]] - goal_vec[8:11]) / 0.1)),
        "base_ee_yaw_tracking": 0.5 * (phi(q[HAND_YAW_IDX[0]] - goal_vec[7])
                                       + phi(q[HAND_YAW_IDX[1]] - goal_vec[11])),
        "action_rate_penalty": -float(np.sum((action - prev_action) ** 2)),
        "torque_penalty": -float(np.sum(world.forces.pd_feedback ** 2)),
        "alive_bonus": 1.0,
    }
    for k, v in base_terms.items():
        if k in weights:
            terms[k] = v
    terms = {k: float(v) for k, v in terms.items() if k in weights}
    return RewardBreakdown(terms=terms, weights={k: weights[k] for k in terms})
