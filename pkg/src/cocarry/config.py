"""Run configuration: one JSON document with every tunable default spelled out.

Sections mirror the subsystems: physics, object, commands, rewards, ppo,
distill, evaluation, serve, run. Unknown keys are rejected so typos fail
loudly instead of silently training with defaults.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    pass


def _from_dict(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            v = data[f.name]
            if hasattr(f.type, "__dataclass_fields__") or (
                    isinstance(f.type, str) and f.type in _SECTION_TYPES):
                sub_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
                kwargs[f.name] = _from_dict(sub_cls, v, f"{path}.{f.name}")
            else:
                kwargs[f.name] = v
    return cls(**kwargs)


@dataclass
class PhysicsSection:
    dt: float = 0.005
    decimation: int = 4
    gravity: float = 9.81
    base_mass: float = 15.0
    base_yaw_inertia: float = 1.5
    hand_mass: float = 0.5
    hand_yaw_inertia: float = 0.02
    kp: list = field(default_factory=lambda: [300.0, 300.0, 50.0, 2000.0,
                                              1000.0, 1000.0, 1000.0, 5.0,
                                              1000.0, 1000.0, 1000.0, 5.0])
    kd: list = field(default_factory=lambda: [40.0, 40.0, 8.0, 300.0,
                                              40.0, 40.0, 40.0, 0.5,
                                              40.0, 40.0, 40.0, 0.5])
    effort_limit: list = field(default_factory=lambda: [500.0, 500.0, 50.0, 800.0,
                                                        100.0, 100.0, 100.0, 50.0,
                                                        100.0, 100.0, 100.0, 50.0])
    leg_limits: list = field(default_factory=lambda: [0.3, 1.0])
    hand_offset_limit: float = 0.5
    hand_yaw_limit: float = 1.57
    nominal_hand_offsets: list = field(
        default_factory=lambda: [[0.4, 0.2, -0.1], [0.4, -0.2, -0.1]])
    nominal_leg: float = 0.7
    action_scale: list = field(default_factory=lambda: [0.5, 0.5, 0.5, 0.35,
                                                        0.25, 0.25, 0.25, 0.6,
                                                        0.25, 0.25, 0.25, 0.6])
    grasp_stiffness: float = 2000.0
    grasp_damping: float = 50.0
    grasp_max_stretch: float = 0.3
    joint_stiffness: list = field(default_factory=lambda: [500.0, 500.0, 500.0,
                                                           50.0, 50.0, 50.0])
    joint_damping: list = field(default_factory=lambda: [10.0, 10.0, 10.0,
                                                         0.5, 0.5, 0.5])
    joint_limit: list = field(default_factory=lambda: [0.2, 0.2, 0.2, 0.5, 0.5, 0.5])
    joint_limit_stiffness_scale: float = 10.0
    support_mass: float = 20.0
    support_inertia: list = field(default_factory=lambda: [1.0, 1.0, 1.0])
    support_kp_height: float = 2000.0
    support_kd_height: float = 200.0
    support_kp_ang: float = 20.0
    # derivative gain on a finite-differenced rate at the control frequency:
    # keep kd/inertia well below 1 or the estimate feeds back unstably
    support_kd_ang: float = 0.05
    leg_gravity_ff: bool = True
    settle_at_reset_s: float = 0.75


@dataclass
class ObjectSection:
    dims: list = field(default_factory=lambda: [1.0, 0.4, 0.3])
    mass: float = 5.0
    # per-episode mass drawn uniformly from mass*(1 +/- jitter); varied loads
    # teach a calibrated vertical force response
    mass_jitter: float = 0.3
    robot_grasp_offsets: list = field(
        default_factory=lambda: [[-0.45, 0.2, 0.0], [-0.45, -0.2, 0.0]])
    human_end_offset: list = field(default_factory=lambda: [0.5, 0.0, 0.0])
    end_markers: list = field(default_factory=lambda: [[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]])


@dataclass
class CommandsSection:
    lin_vel_x: list = field(default_factory=lambda: [-0.8, 1.2])
    lin_vel_y: list = field(default_factory=lambda: [-0.5, 0.5])
    ang_vel: list = field(default_factory=lambda: [-1.2, 1.2])
    height: list = field(default_factory=lambda: [0.45, 0.9])
    ee_cube_side: float = 0.15
    ee_cone_half_angle: float = 0.5235987755982988  # pi/6
    support_lin_vel: list = field(default_factory=lambda: [-0.6, 1.0])
    support_ang_vel: list = field(default_factory=lambda: [-0.8, 0.8])
    support_height: list = field(default_factory=lambda: [0.5, 0.85])
    goal_period_s: float = 5.0
    support_period_s: float = 2.5
    v_applied_noise_sigma: float = 0.1
    ee_interp_time_s: float = 1.0
    # sampled support commands slew toward their targets with this time
    # constant; humans do not change velocity instantaneously
    support_slew_s: float = 0.4
    # fraction of goal draws replaced by the all-zero command (stand at the
    # nominal posture): trains the exact operating point follower mode uses
    zero_goal_prob: float = 0.3


@dataclass
class RewardsSection:
    # collaborative-carrying task terms
    lin_vel_tracking: float = 1.0
    yaw_vel_tracking: float = 1.0
    z_vel_penalty: float = 0.05
    height_diff_penalty: float = 10.0
    force_penalty: float = 0.002
    # base whole-body-control terms
    base_lin_vel_tracking: float = 1.0
    base_yaw_vel_tracking: float = 0.5
    base_height_tracking: float = 0.5
    base_ee_pos_tracking: float = 1.0
    base_ee_yaw_tracking: float = 0.5
    action_rate_penalty: float = 0.01
    torque_penalty: float = 1.0e-6
    alive_bonus: float = 0.2
    # weight applied to base height tracking inside the closed-loop stage;
    # zero by default: the support height drive plus the height-difference
    # penalty already determine height, and the sampled root-height command
    # is unobservable in follower mode
    stage2_height_weight: float = 0.0


@dataclass
class PpoSection:
    clip_ratio: float = 0.2
    gamma: float = 0.95
    lam: float = 0.95
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.002
    value_coef: float = 0.5
    lr: float = 5.0e-4
    max_grad_norm: float = 1.0
    horizon: int = 24
    num_envs: int = 64
    init_log_std: float = -0.5
    desired_kl: float = 0.02
    action_bound: float = 3.6
    bounds_coef: float = 1.0


@dataclass
class DistillSection:
    rounds: int = 12
    beta_decay: float = 0.75
    bc_epochs: int = 40
    lr: float = 1.0e-3
    batch_size: int = 256
    holdout_fraction: float = 0.1
    steps_per_round: int = 96


@dataclass
class EvalSection:
    episodes: int = 50
    episode_seconds: float = 20.0
    seed: int = 0
    ramp_force_max: float = 40.0
    ramp_duration_s: float = 10.0
    lift_forces: list = field(default_factory=lambda: [10.0, 20.0])
    lift_duration_s: float = 10.0
    move_speed_threshold: float = 0.05
    smoothing_window_s: float = 0.25


@dataclass
class ServeSection:
    host: str = "127.0.0.1"
    port: int = 8800
    physics_hz: float = 200.0
    policy_hz: float = 50.0
    broadcast_hz: float = 30.0
    input_time_constant_s: float = 0.25


@dataclass
class RunSection:
    seed: int = 1
    mode: str = "leader"            # leader | follower
    history: int = 25               # observation history length {10, 25, 50}
    hidden: list = field(default_factory=lambda: [128, 128, 128])
    residual_scale: float = 0.5
    stage1_env_steps: int = 2_000_000
    stage2_env_steps: int = 1_000_000
    episode_seconds: float = 20.0
    fall_height: float = 0.25
    perturb_prob: float = 0.03
    perturb_force_max: float = 40.0
    perturb_duration: list = field(default_factory=lambda: [0.3, 2.0])


_SECTION_TYPES = {
    "PhysicsSection": PhysicsSection,
    "ObjectSection": ObjectSection,
    "CommandsSection": CommandsSection,
    "RewardsSection": RewardsSection,
    "PpoSection": PpoSection,
    "DistillSection": DistillSection,
    "EvalSection": EvalSection,
    "ServeSection": ServeSection,
    "RunSection": RunSection,
}


@dataclass
class RunConfig:
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    object: ObjectSection = field(default_factory=ObjectSection)
    commands: CommandsSection = field(default_factory=CommandsSection)
    rewards: RewardsSection = field(default_factory=RewardsSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    distill: DistillSection = field(default_factory=DistillSection)
    evaluation: EvalSection = field(default_factory=EvalSection)
    serve: ServeSection = field(default_factory=ServeSection)
    run: RunSection = field(default_factory=RunSection)

    @staticmethod
    def from_dict(data):
        return _from_dict(RunConfig, data, "config")

    @staticmethod
    def load(path):
        with open(path) as f:
            return RunConfig.from_dict(json.load(f))

    def to_dict(self):
        return asdict(self)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def validate(self):
        c = self.commands
        for name in ("lin_vel_x", "lin_vel_y", "ang_vel", "height",
                     "support_lin_vel", "support_ang_vel", "support_height"):
            low, high = getattr(c, name)
            if low > high:
                raise ConfigError(f"commands.{name}: low > high")
        if self.run.mode not in ("leader", "follower"):
            raise ConfigError("run.mode must be 'leader' or 'follower'")
        if self.run.history < 1:
            raise ConfigError("run.history must be >= 1")
        if self.ppo.clip_ratio <= 0:
            raise ConfigError("ppo.clip_ratio must be > 0")
        if not (0 < self.ppo.gamma <= 1 and 0 < self.ppo.lam <= 1):
            raise ConfigError("ppo.gamma and ppo.lam must be in (0, 1]")
        return self


def sim_params_from(cfg):
    """Build dynamics.SimParams (with couplings) from a RunConfig."""
    from .dynamics import (CompliantJoint6D, GraspCoupling, ObjectSpec, PDGains,
                           SimParams)
    p = cfg.physics
    inf = np.inf
    lower = np.array([-inf, -inf, -inf, p.leg_limits[0]]
                     + [-p.hand_offset_limit] * 3 + [-p.hand_yaw_limit]
                     + [-p.hand_offset_limit] * 3 + [-p.hand_yaw_limit])
    upper = np.array([inf, inf, inf, p.leg_limits[1]]
                     + [p.hand_offset_limit] * 3 + [p.hand_yaw_limit]
                     + [p.hand_offset_limit] * 3 + [p.hand_yaw_limit])
    spec = ObjectSpec(
        dims=np.array(cfg.object.dims, dtype=float),
        mass=float(cfg.object.mass),
        robot_grasp_offsets=np.array(cfg.object.robot_grasp_offsets, dtype=float),
        human_end_offset=np.array(cfg.object.human_end_offset, dtype=float),
        end_markers=np.array(cfg.object.end_markers, dtype=float),
    )
    jl = np.array(cfg.physics.joint_limit, dtype=float)
    joint = CompliantJoint6D(
        stiffness=np.array(p.joint_stiffness, dtype=float),
        damping=np.array(p.joint_damping, dtype=float),
        limit_lower=-jl, limit_upper=jl,
        anchor_support=np.zeros(3),
        anchor_object=np.array(cfg.object.human_end_offset, dtype=float),
        limit_stiffness_scale=float(p.joint_limit_stiffness_scale),
    )
    return SimParams(
        gains=PDGains(kp=np.array(p.kp, dtype=float), kd=np.array(p.kd, dtype=float)),
        effort_limit=np.array(p.effort_limit, dtype=float),
        q_limit_lower=lower, q_limit_upper=upper,
        limit_stiffness_scale=float(p.joint_limit_stiffness_scale),
        nominal_hand_offsets=np.array(p.nominal_hand_offsets, dtype=float),
        hand_yaw_inertia=float(p.hand_yaw_inertia),
        gravity=float(p.gravity),
        leg_gravity_ff=bool(p.leg_gravity_ff),
        grasp=GraspCoupling(stiffness=float(p.grasp_stiffness),
                            damping=float(p.grasp_damping),
                            max_stretch=float(p.grasp_max_stretch)),
        joint=joint,
        object_spec=spec,
    )
