"""Closed-loop collaborative-carrying environment and the stage-1 WBC environment.

`VecEnv` steps B worlds in lockstep (batched physics, shared config). The
closed-loop stage carries the object between the robot's hands and the
support body (the simulated human); the WBC stage is the carrier alone under
goal tracking with random end-effector perturbations.

Command streams are reseeded per (seed, env slot, episode index), so two
policies evaluated with the same seed see identical goals, applied velocities
and perturbations episode by episode, regardless of when their episodes end.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import observations as obs_mod
from . import rewards as rew_mod
from .batch_dynamics import (BatchModel, BatchWorld, batch_step, b_to_matrix,
                             diverged_mask)
from .commands import (CommandRanges, GoalCommand, SupportTargets, goal_vector,
                       sample_goal_command, update_support_targets)
from .config import RunConfig, sim_params_from
from .dynamics import BASE_X, BASE_Y, BASE_YAW, LEG, NQ

TERMINATION = {0: "running", 1: "timeout", 2: "fell", 3: "object_dropped", 4: "diverged"}


def canonical_targets(q, actions, scale, nominal_leg):
    """Map raw policy actions to absolute joint targets.

    Base x/y/yaw targets are offsets from the current pose (the offset given in
    the base frame for x/y); the leg target is absolute around the nominal
    stance; hand targets are absolute offsets from the nominal grasp pose.
    Returns (targets (B,12), canonical (B,12)) where `canonical` is the
    bounded, frame-local encoding stored as prev_action in observations.
    """
    a = np.clip(actions, -4.0, 4.0)
    can = a * scale
    t = np.empty_like(can)
    yaw = q[:, BASE_YAW]
    c, s = np.cos(yaw), np.sin(yaw)
    t[:, BASE_X] = q[:, BASE_X] + c * can[:, 0] - s * can[:, 1]
    t[:, BASE_Y] = q[:, BASE_Y] + s * can[:, 0] + c * can[:, 1]
    t[:, BASE_YAW] = q[:, BASE_YAW] + can[:, 2]
    t[:, LEG] = nominal_leg + can[:, 3]
    t[:, 4:] = can[:, 4:]
    can_obs = can.copy()
    can_obs[:, 3] = t[:, LEG]
    return t, can_obs


@dataclass
class StepInfo:
    """Per-step diagnostics used by metrics, logging and termination analysis."""

    obj_vel: np.ndarray
    obj_yaw_rate: np.ndarray
    v_applied: np.ndarray
    ang_goal: np.ndarray
    end_heights: np.ndarray
    joint_force: np.ndarray
    joint_force_h: np.ndarray
    grasp_stretch: np.ndarray
    termination: np.ndarray
    reward_terms: dict
    base_speed: np.ndarray
    base_height: np.ndarray


class VecEnv:
    def __init__(self, cfg: RunConfig, num_envs, stage="collab", mode=None,
                 seed=0, history_len=None, log_writer=None):
        assert stage in ("wbc", "collab")
        cfg.validate()
        self.cfg = cfg
        self.stage = stage
        self.mode = mode or cfg.run.mode
        self.follower = self.mode == "follower"
        self.B = num_envs
        self.seed = seed
        self.log_writer = log_writer

        self.params = sim_params_from(cfg)
        has_object = stage == "collab"
        spec = self.params.object_spec
        self.model = BatchModel(
            params=self.params,
            base_mass=cfg.physics.base_mass,
            base_yaw_inertia=cfg.physics.base_yaw_inertia,
            hand_point_mass=cfg.physics.hand_mass,
            object_mass=np.full(num_envs, spec.mass) if has_object else spec.mass,
            object_inertia=np.tile(spec.inertia_diag(), (num_envs, 1))
            if has_object else spec.inertia_diag(),
            support_mass=cfg.physics.support_mass,
            support_inertia=np.array(cfg.physics.support_inertia, dtype=float),
            has_object=has_object,
        )
        self.ranges = CommandRanges.from_config(cfg.commands).validate()
        self.weights = rew_mod.default_weights(cfg.rewards, stage)
        self.history_len = history_len or cfg.run.history
        self.dt = cfg.physics.dt
        self.decimation = cfg.physics.decimation
        self.policy_dt = self.dt * self.decimation
        self.episode_len = int(round(cfg.run.episode_seconds / self.policy_dt))
        self.goal_period = int(round(cfg.commands.goal_period_s / self.policy_dt))
        self.support_period = int(round(cfg.commands.support_period_s / self.policy_dt))
        self.ee_interp_steps = max(1, int(round(cfg.commands.ee_interp_time_s / self.policy_dt)))
        self.action_scale = np.array(cfg.physics.action_scale, dtype=float)
        self.nominal_leg = cfg.physics.nominal_leg
        self.nominal_offsets = np.array(cfg.physics.nominal_hand_offsets, dtype=float)
        self.fall_height = cfg.run.fall_height
        self.perturb_enabled = stage == "wbc"

        B = self.B
        self.world = BatchWorld.zeros(B, has_object=has_object)
        self.hist = obs_mod.VecHistory(B, self.history_len, obs_mod.FRAME_DIM)
        self.priv_hist = obs_mod.VecHistory(B, self.history_len, obs_mod.PRIV_DIM)
        self.prev_action = np.zeros((B, NQ))
        self.prev_canonical = np.zeros((B, NQ))
        self.goal_vecs = np.zeros((B, 12))
        self.goals = [None] * B
        # sampled command targets and the slewed values actually in effect
        self.v_applied_cmd = np.zeros((B, 2))
        self.ang_goal_cmd = np.zeros(B)
        self.height_cmd = np.full(B, cfg.physics.nominal_leg)
        self.v_applied = np.zeros((B, 2))
        self.ang_goal = np.zeros(B)
        self.height_target = np.full(B, cfg.physics.nominal_leg)
        slew = max(1e-6, cfg.commands.support_slew_s)
        self._slew_alpha = 1.0 - np.exp(-self.policy_dt / slew)
        self.prev_sup_yaw_rate = np.zeros(B)
        self.ee_start = np.zeros((B, 2, 4))   # (pos3, yaw) interpolation start
        self.ee_target = np.zeros((B, 2, 4))
        self.ee_t = np.full(B, self.ee_interp_steps)
        self.pert_force = np.zeros((B, 2, 3))
        self.pert_left = np.zeros(B, dtype=int)
        self.t = np.zeros(B, dtype=int)
        self.episode = np.zeros(B, dtype=int)
        self._rngs = [None] * B
        self._pert_rngs = [None] * B
        # when True the caller drives v_applied/ang_goal/height_target/goal_vecs
        # directly (live sessions) and the sampling schedule is bypassed
        self.external_commands = False

    # ------------------------------------------------------------- lifecycle

    def _reseed(self, i):
        ep = int(self.episode[i])
        self._rngs[i] = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.seed, i, ep, 1])))
        self._pert_rngs[i] = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([self.seed, i, ep, 2])))

    def _reset_rows(self, idx):
        w = self.world
        spec = self.params.object_spec
        for i in idx:
            self._reseed(i)
            w.q[i] = 0.0
            w.q[i, LEG] = self.nominal_leg
            w.qd[i] = 0.0
            w.time[i] = 0.0
            if self.model.has_object:
                jit = self.cfg.object.mass_jitter
                m = spec.mass * (1.0 + self._rngs[i].uniform(-jit, jit)) if jit > 0 \
                    else spec.mass
                self.model.object_mass[i] = m
                self.model.object_inertia[i] = spec.inertia_diag() * (m / spec.mass)
                hands_mid = np.array([0.0, 0.0, self.nominal_leg]) + \
                    0.5 * (self.nominal_offsets[0] + self.nominal_offsets[1])
                grasp_mid = 0.5 * (spec.robot_grasp_offsets[0] + spec.robot_grasp_offsets[1])
                obj_pos = hands_mid - grasp_mid
                w.obj_pos[i] = obj_pos
                w.obj_quat[i] = (1.0, 0.0, 0.0, 0.0)
                w.obj_vel[i] = 0.0
                w.obj_ang[i] = 0.0
                anchor = obj_pos + self.params.joint.anchor_object
                w.sup_pos[i] = anchor
                w.sup_quat[i] = (1.0, 0.0, 0.0, 0.0)
                w.sup_vel[i] = 0.0
                w.sup_ang[i] = 0.0
            self.t[i] = 0
            self.prev_action[i] = 0.0
            self.prev_canonical[i] = 0.0
            self.prev_sup_yaw_rate[i] = 0.0
            self.pert_force[i] = 0.0
            self.pert_left[i] = 0
            self._sample_goal(i)
            self._sample_support(i)
            # the human starts at rest and accelerates toward the command
            self.v_applied[i] = 0.0
            self.ang_goal[i] = 0.0
            # jump the ee interpolation straight to the sampled target
            self.ee_start[i] = self.ee_target[i]
            self.ee_t[i] = self.ee_interp_steps
            self._refresh_goal_vec(i)
        if self.model.has_object:
            self.height_target[idx] = self.world.sup_pos[idx, 2]
            if self.cfg.physics.settle_at_reset_s > 0.0:
                self._settle(idx)
        frames = obs_mod.build_frames(w.q, w.qd, self.prev_canonical)
        self.hist.fill(frames, idx=np.asarray(idx))
        if self.model.has_object:
            priv = obs_mod.build_priv_frames(w.q, w.obj_pos, w.obj_quat,
                                             w.obj_vel, w.obj_ang)
            self.priv_hist.fill(priv, idx=np.asarray(idx))

    def _settle(self, idx):
        """Let freshly placed worlds sag to static equilibrium under their load.

        Runs a short zero-command rollout on the selected rows (support held at
        its sampled height target, no applied velocity), then zeroes all
        velocities. Episode time stays 0.
        """
        idx = np.asarray(idx)
        sub = BatchWorld(*[getattr(self.world, f)[idx].copy() for f in (
            'q', 'qd', 'obj_pos', 'obj_quat', 'obj_vel', 'obj_ang',
            'sup_pos', 'sup_quat', 'sup_vel', 'sup_ang', 'time')])
        model = replace(self.model, object_mass=self.model.object_mass[idx],
                        object_inertia=self.model.object_inertia[idx])
        n = len(idx)
        targets = np.zeros((n, NQ))
        targets[:, LEG] = self.nominal_leg
        g = self.params.gravity
        steps = int(round(self.cfg.physics.settle_at_reset_s / self.dt))
        height_t = sub.sup_pos[:, 2].copy()
        for _ in range(steps):
            targets[:, BASE_X] = sub.q[:, BASE_X]
            targets[:, BASE_Y] = sub.q[:, BASE_Y]
            targets[:, BASE_YAW] = sub.q[:, BASE_YAW]
            sup_fz = (self.model.support_mass * g
                      + self.cfg.physics.support_kp_height * (height_t - sub.sup_pos[:, 2])
                      - self.cfg.physics.support_kd_height * sub.sup_vel[:, 2])
            sub, _ = batch_step(model, sub, targets,
                                support_force_z=sup_fz, dt=self.dt)
        sub.qd[:] = 0.0
        sub.obj_vel[:] = 0.0
        sub.obj_ang[:] = 0.0
        sub.sup_vel[:] = 0.0
        sub.sup_ang[:] = 0.0
        sub.time[:] = 0.0
        for f in ('q', 'qd', 'obj_pos', 'obj_quat', 'obj_vel', 'obj_ang',
                  'sup_pos', 'sup_quat', 'sup_vel', 'sup_ang', 'time'):
            getattr(self.world, f)[idx] = getattr(sub, f)

    def _sample_goal(self, i):
        rng = self._rngs[i]
        zero_p = self.cfg.commands.zero_goal_prob
        draw = rng.uniform()
        g = sample_goal_command(rng, self.ranges, self.nominal_offsets)
        if draw < zero_p:
            # hold the nominal posture: the command follower mode zeroes to
            g = GoalCommand(v_lin=np.zeros(2), v_ang=0.0, h_root=self.nominal_leg,
                            ee_pos=self.nominal_offsets.copy(), ee_yaw=np.zeros(2))
        self.goals[i] = g
        # new ee goal interpolates from the currently commanded pose
        cur = self._current_ee(i)
        self.ee_start[i] = cur
        self.ee_target[i, :, 0:3] = g.ee_pos
        self.ee_target[i, :, 3] = g.ee_yaw
        self.ee_t[i] = 0

    def _sample_support(self, i):
        st = update_support_targets(
            self._rngs[i], self.goals[i], self.ranges,
            noise_sigma=self.cfg.commands.v_applied_noise_sigma,
            carrier_yaw=float(self.world.q[i, BASE_YAW]))
        self.v_applied_cmd[i] = st.v_applied
        self.ang_goal_cmd[i] = st.ang_goal
        self.height_cmd[i] = st.height_target

    def _current_ee(self, i):
        f = min(1.0, self.ee_t[i] / self.ee_interp_steps)
        return self.ee_start[i] + f * (self.ee_target[i] - self.ee_start[i])

    def _refresh_goal_vec(self, i):
        g = self.goals[i]
        ee = self._current_ee(i)
        self.goal_vecs[i, 0:2] = g.v_lin
        self.goal_vecs[i, 2] = g.v_ang
        # height command is encoded relative to the nominal stance so that the
        # all-zero goal vector reads "hold the nominal posture"
        self.goal_vecs[i, 3] = g.h_root - self.nominal_leg
        self.goal_vecs[i, 4:7] = ee[0, 0:3] - self.nominal_offsets[0]
        self.goal_vecs[i, 7] = ee[0, 3]
        self.goal_vecs[i, 8:11] = ee[1, 0:3] - self.nominal_offsets[1]
        self.goal_vecs[i, 11] = ee[1, 3]

    def reset(self):
        self._reset_rows(list(range(self.B)))
        return self._observe()

    # ------------------------------------------------------------------ step

    def _update_perturbations(self):
        for i in range(self.B):
            if self.pert_left[i] > 0:
                self.pert_left[i] -= 1
                if self.pert_left[i] == 0:
                    self.pert_force[i] = 0.0
            elif self.cfg.run.perturb_force_max > 0.0 and \
                    self._pert_rngs[i].uniform() < self.cfg.run.perturb_prob:
                r = self._pert_rngs[i]
                mag = r.uniform(0.0, self.cfg.run.perturb_force_max)
                v = r.normal(size=3)
                n = np.linalg.norm(v)
                d = v / n if n > 1e-9 else np.array([1.0, 0.0, 0.0])
                lo, hi = self.cfg.run.perturb_duration
                steps = max(1, int(round(r.uniform(lo, hi) / self.policy_dt)))
                which = r.integers(0, 3)  # left, right, both
                self.pert_force[i] = 0.0
                if which in (0, 2):
                    self.pert_force[i, 0] = mag * d
                if which in (1, 2):
                    self.pert_force[i, 1] = mag * d
                self.pert_left[i] = steps

    def step(self, actions, extra_hand_forces=None):
        """One control step (decimation physics substeps). Returns
        (obs, priv_obs, reward_total, dones, info)."""
        B = self.B
        actions = np.clip(np.asarray(actions, dtype=float), -4.0, 4.0)
        self.t += 1
        if not self.external_commands:
            for i in range(B):
                resample_goal = self.t[i] % self.goal_period == 0
                if resample_goal:
                    self._sample_goal(i)
                if resample_goal or self.t[i] % self.support_period == 0:
                    self._sample_support(i)
                if self.ee_t[i] < self.ee_interp_steps:
                    self.ee_t[i] += 1
                self._refresh_goal_vec(i)
            a = self._slew_alpha
            self.v_applied += a * (self.v_applied_cmd - self.v_applied)
            self.ang_goal += a * (self.ang_goal_cmd - self.ang_goal)
            self.height_target += a * (self.height_cmd - self.height_target)

        targets, canonical = canonical_targets(self.world.q, actions,
                                               self.action_scale, self.nominal_leg)

        hand_forces = None
        if self.perturb_enabled:
            self._update_perturbations()
            hand_forces = self.pert_force
        if extra_hand_forces is not None:
            hand_forces = (self.pert_force + extra_hand_forces
                           if self.perturb_enabled else extra_hand_forces)

        sup_fz = None
        sup_tz = None
        if self.model.has_object:
            w = self.world
            w.sup_vel[:, 0:2] = self.v_applied
            g = self.params.gravity
            sup_fz = (self.model.support_mass * g
                      + self.cfg.physics.support_kp_height * (self.height_target - w.sup_pos[:, 2])
                      - self.cfg.physics.support_kd_height * w.sup_vel[:, 2])
            yaw_rate = w.sup_ang[:, 2]
            accel_est = (yaw_rate - self.prev_sup_yaw_rate) / self.policy_dt
            sup_tz = (self.cfg.physics.support_kp_ang * (self.ang_goal - yaw_rate)
                      - self.cfg.physics.support_kd_ang * accel_est)
            self.prev_sup_yaw_rate = yaw_rate.copy()

        rec = None
        for _ in range(self.decimation):
            self.world, rec = batch_step(self.model, self.world, targets,
                                         hand_forces, sup_fz, sup_tz, dt=self.dt)

        # rewards
        w = self.world
        if self.model.has_object:
            Ro = b_to_matrix(w.obj_quat)
            ends = rew_mod.end_marker_heights(w.obj_pos, Ro, self.params.object_spec.end_markers)
            terms = rew_mod.batch_task_terms(w.obj_vel, w.obj_ang[:, 2], ends,
                                             rec.joint_force, self.v_applied, self.ang_goal)
        else:
            ends = np.zeros((B, 2))
            terms = {}
        base_terms = rew_mod.batch_base_terms(w.q, w.qd, self.goal_vecs, actions,
                                              self.prev_action, rec.pd_feedback,
                                              self.nominal_offsets, self.nominal_leg)
        for k, v in base_terms.items():
            if k in self.weights:
                terms[k] = v
        terms = {k: v for k, v in terms.items() if k in self.weights}
        reward = np.zeros(B)
        for k, v in terms.items():
            reward += self.weights[k] * v

        # termination
        term = np.zeros(B, dtype=int)
        term[self.t >= self.episode_len] = 1
        term[w.q[:, LEG] < self.fall_height] = 2
        if self.model.has_object:
            term[rec.grasp_broken] = 3
        bad = diverged_mask(w) if self.model.has_object else ~np.isfinite(w.q).all(axis=1)
        term[bad] = 4
        dones = term > 0

        info = StepInfo(
            obj_vel=w.obj_vel.copy(), obj_yaw_rate=w.obj_ang[:, 2].copy(),
            v_applied=self.v_applied.copy(), ang_goal=self.ang_goal.copy(),
            end_heights=ends, joint_force=rec.joint_force.copy(),
            joint_force_h=np.hypot(rec.joint_force[:, 0], rec.joint_force[:, 1]),
            grasp_stretch=rec.grasp_stretch.copy(), termination=term,
            reward_terms=terms,
            base_speed=np.hypot(w.qd[:, BASE_X], w.qd[:, BASE_Y]),
            base_height=w.q[:, LEG].copy(),
        )
        if self.log_writer is not None:
            self._log(actions, reward, term, info)

        self.prev_action = actions
        self.prev_canonical = canonical

        done_idx = np.nonzero(dones)[0]
        if len(done_idx) > 0:
            self.episode[done_idx] += 1
            self._reset_rows(list(done_idx))
        live = ~dones
        if np.any(live):
            frames = obs_mod.build_frames(w.q, w.qd, self.prev_canonical)
            self.hist.buf[live, self.hist.head, :] = frames[live]
            if self.model.has_object:
                priv = obs_mod.build_priv_frames(w.q, w.obj_pos, w.obj_quat,
                                                 w.obj_vel, w.obj_ang)
                self.priv_hist.buf[live, self.priv_hist.head, :] = priv[live]
        self.hist.head = (self.hist.head + 1) % self.history_len
        if self.model.has_object:
            self.priv_hist.head = (self.priv_hist.head + 1) % self.history_len

        obs, priv = self._observe()
        return obs, priv, reward, dones, info

    def _log(self, actions, reward, term, info):
        for i in range(self.B):
            rec = {
                "env": i, "episode": int(self.episode[i]), "t": int(self.t[i]),
                "time": round(float(self.t[i]) * self.policy_dt, 6),
                "reward": float(reward[i]),
                "terms": {k: float(v[i]) for k, v in info.reward_terms.items()},
                "obj_vel": [float(x) for x in info.obj_vel[i]],
                "obj_yaw_rate": float(info.obj_yaw_rate[i]),
                "v_applied": [float(x) for x in info.v_applied[i]],
                "ang_goal": float(info.ang_goal[i]),
                "end_heights": [float(x) for x in info.end_heights[i]],
                "joint_force_h": float(info.joint_force_h[i]),
                "base_speed": float(info.base_speed[i]),
                "base_height": float(info.base_height[i]),
                "termination": TERMINATION[int(term[i])],
            }
            self.log_writer.write(json.dumps(rec) + "\n")

    def _observe(self):
        obs = obs_mod.assemble_wbc_observation(self.hist.flat(), self.goal_vecs,
                                               self.follower)
        priv = self.priv_hist.flat() if self.model.has_object else None
        return obs, priv

    @property
    def wbc_obs_dim(self):
        return obs_mod.wbc_obs_dim(self.history_len)

    @property
    def priv_obs_dim(self):
        return obs_mod.priv_obs_dim(self.history_len)
