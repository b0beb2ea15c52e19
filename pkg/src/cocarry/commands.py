"""Goal-command and support-target sampling for the closed-loop environment."""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from .quat import slerp  # re-exported: goal interpolation entry point

__all__ = ["GoalCommand", "CommandRanges", "SupportTargets", "slerp",
           "sample_goal_command", "sample_ee_goal", "update_support_targets",
           "goal_vector"]


@dataclass
class GoalCommand:
    """Whole-body command: planar velocities, root height, per-hand ee pose."""

    v_lin: np.ndarray          # (2,) m/s, base frame (x forward, y lateral)
    v_ang: float               # rad/s yaw
    h_root: float              # m
    ee_pos: np.ndarray         # (2, 3) m, base frame (absolute, around nominal grasp)
    ee_yaw: np.ndarray         # (2,) rad relative to base


@dataclass
class CommandRanges:
    lin_vel_x: tuple = (-0.8, 1.2)
    lin_vel_y: tuple = (-0.5, 0.5)
    ang_vel: tuple = (-1.2, 1.2)
    height: tuple = (0.45, 0.9)
    ee_cube_side: float = 0.15
    ee_cone_half_angle: float = np.pi / 6
    support_lin_vel: tuple = (-0.6, 1.0)
    support_ang_vel: tuple = (-0.8, 0.8)
    support_height: tuple = (0.5, 0.85)

    @staticmethod
    def from_config(c):
        return CommandRanges(
            lin_vel_x=tuple(c.lin_vel_x), lin_vel_y=tuple(c.lin_vel_y),
            ang_vel=tuple(c.ang_vel), height=tuple(c.height),
            ee_cube_side=float(c.ee_cube_side),
            ee_cone_half_angle=float(c.ee_cone_half_angle),
            support_lin_vel=tuple(c.support_lin_vel),
            support_ang_vel=tuple(c.support_ang_vel),
            support_height=tuple(c.support_height))

    def validate(self):
        for name in ("lin_vel_x", "lin_vel_y", "ang_vel", "height",
                     "support_lin_vel", "support_ang_vel", "support_height"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"command range {name}: low > high")
        if self.ee_cube_side < 0 or self.ee_cone_half_angle < 0:
            raise ValueError("ee sampling ranges must be nonnegative")
        return self


@dataclass
class SupportTargets:
    """Human-proxy drive: applied horizontal velocity, yaw-rate goal, height goal."""

    v_applied: np.ndarray = field(default_factory=lambda: np.zeros(2))  # world m/s
    ang_goal: float = 0.0
    height_target: float = 0.7


def sample_ee_goal(rng, nominal_pos, nominal_yaw, cube_side, cone_half_angle):
    """One hand's pose goal: uniform cube around the nominal position, uniform
    yaw cone around the nominal yaw."""
    if cube_side < 0:
        raise ValueError("cube_side must be >= 0")
    pos = np.asarray(nominal_pos, dtype=float) + rng.uniform(-0.5, 0.5, 3) * cube_side
    yaw = float(nominal_yaw) + rng.uniform(-cone_half_angle, cone_half_angle)
    return pos, yaw


def sample_goal_command(rng, ranges, nominal_ee_offsets):
    """Draw a full GoalCommand uniformly from the configured ranges."""
    ranges.validate()
    v_lin = np.array([rng.uniform(*ranges.lin_vel_x), rng.uniform(*ranges.lin_vel_y)])
    v_ang = rng.uniform(*ranges.ang_vel)
    h_root = rng.uniform(*ranges.height)
    ee_pos = np.zeros((2, 3))
    ee_yaw = np.zeros(2)
    for i in range(2):
        ee_pos[i], ee_yaw[i] = sample_ee_goal(
            rng, nominal_ee_offsets[i], 0.0,
            ranges.ee_cube_side, ranges.ee_cone_half_angle)
    return GoalCommand(v_lin=v_lin, v_ang=float(v_ang), h_root=float(h_root),
                       ee_pos=ee_pos, ee_yaw=ee_yaw)


def update_support_targets(rng, goal, ranges, noise_sigma=0.1, carrier_yaw=0.0):
    """Resample the support-body drive from the current goal.

    The applied-velocity magnitude is uniform in (0, |goal velocity|), its
    direction is the goal direction rotated into the world frame, with
    Gaussian noise clipped so the magnitude never exceeds the goal magnitude
    plus three sigma (and stays within the support range).
    """
    gmag = float(np.linalg.norm(goal.v_lin))
    cap = min(gmag, ranges.support_lin_vel[1])
    mag = rng.uniform(0.0, cap) if cap > 0.0 else 0.0
    if gmag > 1e-9:
        c, s = np.cos(carrier_yaw), np.sin(carrier_yaw)
        d = np.array([c * goal.v_lin[0] - s * goal.v_lin[1],
                      s * goal.v_lin[0] + c * goal.v_lin[1]]) / gmag
    else:
        d = np.zeros(2)
    v = d * mag
    if noise_sigma > 0.0:
        v = v + rng.normal(0.0, noise_sigma, 2)
        limit = cap + 3.0 * noise_sigma
        n = float(np.linalg.norm(v))
        if n > limit:
            v = v * (limit / n)
    ang = rng.uniform(*ranges.support_ang_vel)
    h = rng.uniform(*ranges.support_height)
    return SupportTargets(v_applied=v, ang_goal=float(ang), height_target=float(h))


def goal_vector(goal, nominal_ee_offsets):
    """12-dim observation encoding: [v_lin, v_ang, h_root, per-hand (pos-nominal, yaw)].

    Hand position goals are expressed as offsets from the nominal grasp pose so
    they live in the same coordinates as the hand joint slots.
    """
    out = np.empty(12)
    out[0:2] = goal.v_lin
    out[2] = goal.v_ang
    out[3] = goal.h_root
    out[4:7] = goal.ee_pos[0] - nominal_ee_offsets[0]
    out[7] = goal.ee_yaw[0]
    out[8:11] = goal.ee_pos[1] - nominal_ee_offsets[1]
    out[11] = goal.ee_yaw[1]
    return out
