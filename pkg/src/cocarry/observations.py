"""Observation assembly: proprioceptive frames, privileged frames, histories.

A proprioceptive frame is 43 numbers:

    q_pos (12) | q_vel (12) | root quaternion (4) | gravity in root (3) | prev action (12)

World-frame quantities are canonicalized so the frame is bounded and
translation-invariant: the base x/y/yaw position slots read zero (absolute
world pose is not proprioceptive), base linear velocity is expressed in the
base frame, and prev_action holds the previously issued joint targets in the
same relative convention the action space uses. The privileged frame is the
carried object's state (13 numbers) expressed relative to the carrier base.
"""

import numpy as np

from .dynamics import BASE_X, BASE_Y, BASE_YAW, LEG, HAND_SLICES, HAND_YAW_IDX, NQ

FRAME_DIM = 43
PRIV_DIM = 13
GOAL_DIM = 12


def frame_dim():
    return FRAME_DIM


def wbc_obs_dim(history_len):
    return FRAME_DIM * history_len + GOAL_DIM


def priv_obs_dim(history_len):
    return PRIV_DIM * history_len


def build_frames(q, qd, prev_action_canonical):
    """Batched proprioceptive frames, (B, 43)."""
    B = q.shape[0]
    out = np.zeros((B, FRAME_DIM))
    # q_pos: base planar slots canonically zero
    out[:, 3] = q[:, LEG]
    out[:, 4:7] = q[:, HAND_SLICES[0]]
    out[:, 7] = q[:, HAND_YAW_IDX[0]]
    out[:, 8:11] = q[:, HAND_SLICES[1]]
    out[:, 11] = q[:, HAND_YAW_IDX[1]]
    # q_vel: base linear velocity in base frame
    yaw = q[:, BASE_YAW]
    c, s = np.cos(yaw), np.sin(yaw)
    vx, vy = qd[:, BASE_X], qd[:, BASE_Y]
    out[:, 12] = c * vx + s * vy
    out[:, 13] = -s * vx + c * vy
    out[:, 14] = qd[:, BASE_YAW]
    out[:, 15] = qd[:, LEG]
    out[:, 16:19] = qd[:, HAND_SLICES[0]]
    out[:, 19] = qd[:, HAND_YAW_IDX[0]]
    out[:, 20:23] = qd[:, HAND_SLICES[1]]
    out[:, 23] = qd[:, HAND_YAW_IDX[1]]
    # root orientation quaternion (w,x,y,z; yaw only by construction)
    half = 0.5 * yaw
    out[:, 24] = np.cos(half)
    out[:, 27] = np.sin(half)
    # unit gravity direction in the root frame (roll/pitch locked)
    out[:, 30] = -1.0
    # prev action (canonical joint-target form)
    out[:, 31:43] = prev_action_canonical
    return out


def build_priv_frames(q, obj_pos, obj_quat, obj_vel, obj_ang):
    """Batched privileged frames: object state in the carrier base frame, (B, 13)."""
    B = q.shape[0]
    yaw = q[:, BASE_YAW]
    c, s = np.cos(yaw), np.sin(yaw)
    base = np.stack([q[:, BASE_X], q[:, BASE_Y], q[:, LEG]], axis=1)
    rel = obj_pos - base

    def to_base(v):
        return np.stack([c * v[:, 0] + s * v[:, 1],
                         -s * v[:, 0] + c * v[:, 1],
                         v[:, 2]], axis=1)

    out = np.empty((B, PRIV_DIM))
    out[:, 0:3] = to_base(obj_vel)
    out[:, 3:6] = to_base(obj_ang)
    out[:, 6:9] = to_base(rel)
    # relative orientation: conj(yaw quat) * obj quat
    half = 0.5 * yaw
    bw, bz = np.cos(half), -np.sin(half)
    w, x, y, z = obj_quat[:, 0], obj_quat[:, 1], obj_quat[:, 2], obj_quat[:, 3]
    out[:, 9] = bw * w - bz * z
    out[:, 10] = bw * x - bz * y
    out[:, 11] = bw * y + bz * x
    out[:, 12] = bw * z + bz * w
    # violent episodes (force spikes near a grasp break) can fling the object;
    # unbounded readouts would blow up the consumers' gradients
    np.clip(out, -10.0, 10.0, out=out)
    return out


class VecHistory:
    """Fixed-length rolling window of frames, always full (pre-filled at reset)."""

    def __init__(self, num_envs, length, dim):
        self.length = length
        self.dim = dim
        self.buf = np.zeros((num_envs, length, dim))
        self.head = 0  # index of the oldest frame

    def fill(self, frames, idx=None):
        """Pre-fill the whole window with one frame per env (reset rule)."""
        if idx is None:
            self.buf[:] = frames[:, None, :]
        else:
            self.buf[idx] = frames[idx][:, None, :]

    def push(self, frames):
        self.buf[:, self.head, :] = frames
        self.head = (self.head + 1) % self.length

    def flat(self):
        """(B, length*dim), oldest frame first, newest last."""
        if self.head == 0:
            return self.buf.reshape(self.buf.shape[0], -1)
        ordered = np.concatenate([self.buf[:, self.head:], self.buf[:, :self.head]], axis=1)
        return ordered.reshape(self.buf.shape[0], -1)


def assemble_wbc_observation(history_flat, goal_vecs, follower):
    """[frame_1 ... frame_l, goal] with follower mode zeroing the goal slots."""
    B = history_flat.shape[0]
    g = np.zeros((B, GOAL_DIM)) if follower else goal_vecs
    out = np.concatenate([history_flat, g], axis=1)
    return out
