"""Runtime policy wrappers for every pipeline stage.

Each wrapper exposes ``act(obs, priv=None) -> raw action (B, 12)`` operating on
unnormalized environment observations (deterministic mean actions; exploration
noise lives in the trainers). Wrappers know how to pack themselves into
checkpoint arrays and back.
"""

from dataclasses import dataclass

import numpy as np

from .checkpoint import (Checkpoint, CheckpointError, mlp_from_arrays,
                         mlp_to_arrays, norm_from_arrays, norm_to_arrays)
from .learn import GaussianPolicy, MlpParams, RunningNorm, forward, init_mlp
from .observations import GOAL_DIM


def compose_action(a_wbc, a_residual, lower=-4.0, upper=4.0):
    """Residual composition: elementwise sum clamped to the action bounds."""
    return np.clip(np.asarray(a_wbc) + np.asarray(a_residual), lower, upper)


DEFAULT_GOAL_TILE = 8


def featurize(obs_n, goal_tile=DEFAULT_GOAL_TILE):
    """Network input from a normalized observation.

    The 12 goal slots are a sliver of the history-dominated observation;
    tiling them a few extra times raises their share of the first-layer
    fan-in, which matters a great deal at desk-scale sample counts. Purely a
    policy-side featurization: no new information, recorded in checkpoints.
    """
    if goal_tile <= 1:
        return obs_n
    return np.concatenate([obs_n] + [obs_n[:, -GOAL_DIM:]] * (goal_tile - 1), axis=1)


def feature_dim(obs_dim, goal_tile=DEFAULT_GOAL_TILE):
    return obs_dim + GOAL_DIM * (goal_tile - 1) if goal_tile > 1 else obs_dim


@dataclass
class WbcPolicy:
    """Goal-conditioned whole-body controller (stage 1)."""

    norm: RunningNorm
    actor: MlpParams
    log_std: np.ndarray
    critic: MlpParams
    history_len: int = 25
    mode: str = "leader"
    goal_tile: int = DEFAULT_GOAL_TILE

    def features(self, obs):
        return featurize(self.norm.normalize(obs), self.goal_tile)

    def act(self, obs, priv=None):
        mean, _ = forward(self.actor, self.features(obs))
        return mean

    def to_checkpoint(self, stage="wbc", seed=0, train_steps=0, hidden=(),
                      extra=None):
        arrays = {}
        norm_to_arrays("norm", self.norm, arrays)
        mlp_to_arrays("actor", self.actor, arrays)
        arrays["actor.log_std"] = self.log_std
        mlp_to_arrays("critic", self.critic, arrays)
        meta = {"goal_tile": self.goal_tile}
        meta.update(extra or {})
        return Checkpoint(stage=stage, mode=self.mode, seed=seed,
                          train_steps=train_steps, history_len=self.history_len,
                          hidden=list(hidden), extra=meta, arrays=arrays)

    @staticmethod
    def from_checkpoint(ckpt):
        if ckpt.stage not in ("wbc", "baseline_vanilla"):
            raise CheckpointError("layout_mismatch",
                                  f"stage {ckpt.stage!r} is not a wbc-style checkpoint")
        return WbcPolicy(
            norm=norm_from_arrays("norm", ckpt.arrays),
            actor=mlp_from_arrays("actor", ckpt.arrays),
            log_std=np.asarray(ckpt.arrays["actor.log_std"], dtype=float),
            critic=mlp_from_arrays("critic", ckpt.arrays),
            history_len=ckpt.history_len, mode=ckpt.mode,
            goal_tile=int(ckpt.extra.get("goal_tile", 1)))


@dataclass
class TeacherComposite:
    """Frozen base WBC plus a privileged residual actor (stage 2)."""

    base: WbcPolicy
    residual: MlpParams
    res_log_std: np.ndarray
    res_critic: MlpParams
    residual_scale: float = 0.5
    history_len: int = 25
    mode: str = "follower"
    base_arrays_f32: dict = None   # verbatim float32 arrays for bitwise re-saving

    def residual_input(self, obs, priv):
        return np.concatenate([self.base.features(obs), priv], axis=1)

    def act(self, obs, priv):
        a_wbc = self.base.act(obs)
        res, _ = forward(self.residual, self.residual_input(obs, priv))
        return compose_action(a_wbc, self.residual_scale * res)

    def to_checkpoint(self, seed=0, train_steps=0, hidden=()):
        arrays = {}
        if self.base_arrays_f32 is not None:
            for k, v in self.base_arrays_f32.items():
                arrays[f"base.{k}"] = v
        else:
            base_arrays = {}
            norm_to_arrays("norm", self.base.norm, base_arrays)
            mlp_to_arrays("actor", self.base.actor, base_arrays)
            base_arrays["actor.log_std"] = self.base.log_std
            mlp_to_arrays("critic", self.base.critic, base_arrays)
            for k, v in base_arrays.items():
                arrays[f"base.{k}"] = v
        mlp_to_arrays("res", self.residual, arrays)
        arrays["res.log_std"] = self.res_log_std
        mlp_to_arrays("res_critic", self.res_critic, arrays)
        return Checkpoint(stage="teacher", mode=self.mode, seed=seed,
                          train_steps=train_steps, history_len=self.history_len,
                          hidden=list(hidden),
                          extra={"residual_scale": self.residual_scale,
                                 "goal_tile": self.base.goal_tile},
                          arrays=arrays)

    @staticmethod
    def from_checkpoint(ckpt):
        if ckpt.stage != "teacher":
            raise CheckpointError("layout_mismatch", f"stage {ckpt.stage!r} != teacher")
        base_arrays = {k[len("base."):]: v for k, v in ckpt.arrays.items()
                       if k.startswith("base.")}
        base = WbcPolicy(
            norm=norm_from_arrays("norm", base_arrays),
            actor=mlp_from_arrays("actor", base_arrays),
            log_std=np.asarray(base_arrays["actor.log_std"], dtype=float),
            critic=mlp_from_arrays("critic", base_arrays),
            history_len=ckpt.history_len, mode=ckpt.mode,
            goal_tile=int(ckpt.extra.get("goal_tile", 1)))
        return TeacherComposite(
            base=base,
            residual=mlp_from_arrays("res", ckpt.arrays),
            res_log_std=np.asarray(ckpt.arrays["res.log_std"], dtype=float),
            res_critic=mlp_from_arrays("res_critic", ckpt.arrays),
            residual_scale=float(ckpt.extra.get("residual_scale", 0.5)),
            history_len=ckpt.history_len, mode=ckpt.mode,
            base_arrays_f32=base_arrays)


@dataclass
class StudentPolicy:
    """Proprioception-only distilled policy (stage 3)."""

    norm: RunningNorm
    net: MlpParams
    history_len: int = 25
    mode: str = "follower"
    goal_tile: int = DEFAULT_GOAL_TILE

    def act(self, obs, priv=None):
        out, _ = forward(self.net, featurize(self.norm.normalize(obs), self.goal_tile))
        return out

    def to_checkpoint(self, seed=0, train_steps=0, hidden=(), extra=None):
        arrays = {}
        norm_to_arrays("norm", self.norm, arrays)
        mlp_to_arrays("student", self.net, arrays)
        meta = {"goal_tile": self.goal_tile}
        meta.update(extra or {})
        return Checkpoint(stage="student", mode=self.mode, seed=seed,
                          train_steps=train_steps, history_len=self.history_len,
                          hidden=list(hidden), extra=meta, arrays=arrays)

    @staticmethod
    def from_checkpoint(ckpt):
        if ckpt.stage != "student":
            raise CheckpointError("layout_mismatch", f"stage {ckpt.stage!r} != student")
        return StudentPolicy(
            norm=norm_from_arrays("norm", ckpt.arrays),
            net=mlp_from_arrays("student", ckpt.arrays),
            history_len=ckpt.history_len, mode=ckpt.mode,
            goal_tile=int(ckpt.extra.get("goal_tile", 1)))


@dataclass
class ExplicitGoalPolicy:
    """Baseline: estimator predicts the goal command, fed to the frozen WBC."""

    base: WbcPolicy
    estimator: MlpParams
    est_log_std: np.ndarray
    est_critic: MlpParams
    goal_low: np.ndarray
    goal_high: np.ndarray
    history_len: int = 25
    mode: str = "follower"
    base_arrays_f32: dict = None

    def predict_goal(self, obs):
        blind = obs.copy()
        blind[:, -GOAL_DIM:] = 0.0
        mean, _ = forward(self.estimator, self.base.features(blind))
        return np.clip(mean, self.goal_low, self.goal_high)

    def act(self, obs, priv=None, goal_override=None):
        goal = self.predict_goal(obs) if goal_override is None else goal_override
        filled = obs.copy()
        filled[:, -GOAL_DIM:] = goal
        return self.base.act(filled)

    def to_checkpoint(self, seed=0, train_steps=0, hidden=()):
        arrays = {}
        src = self.base_arrays_f32
        if src is None:
            src = {}
            norm_to_arrays("norm", self.base.norm, src)
            mlp_to_arrays("actor", self.base.actor, src)
            src["actor.log_std"] = self.base.log_std
            mlp_to_arrays("critic", self.base.critic, src)
        for k, v in src.items():
            arrays[f"base.{k}"] = v
        mlp_to_arrays("est", self.estimator, arrays)
        arrays["est.log_std"] = self.est_log_std
        mlp_to_arrays("est_critic", self.est_critic, arrays)
        arrays["goal_low"] = self.goal_low
        arrays["goal_high"] = self.goal_high
        return Checkpoint(stage="baseline_explicit", mode=self.mode, seed=seed,
                          train_steps=train_steps, history_len=self.history_len,
                          hidden=list(hidden),
                          extra={"goal_tile": self.base.goal_tile}, arrays=arrays)

    @staticmethod
    def from_checkpoint(ckpt):
        if ckpt.stage != "baseline_explicit":
            raise CheckpointError("layout_mismatch",
                                  f"stage {ckpt.stage!r} != baseline_explicit")
        base_arrays = {k[len("base."):]: v for k, v in ckpt.arrays.items()
                       if k.startswith("base.")}
        base = WbcPolicy(
            norm=norm_from_arrays("norm", base_arrays),
            actor=mlp_from_arrays("actor", base_arrays),
            log_std=np.asarray(base_arrays["actor.log_std"], dtype=float),
            critic=mlp_from_arrays("critic", base_arrays),
            history_len=ckpt.history_len, mode=ckpt.mode,
            goal_tile=int(ckpt.extra.get("goal_tile", 1)))
        return ExplicitGoalPolicy(
            base=base,
            estimator=mlp_from_arrays("est", ckpt.arrays),
            est_log_std=np.asarray(ckpt.arrays["est.log_std"], dtype=float),
            est_critic=mlp_from_arrays("est_critic", ckpt.arrays),
            goal_low=np.asarray(ckpt.arrays["goal_low"], dtype=float),
            goal_high=np.asarray(ckpt.arrays["goal_high"], dtype=float),
            history_len=ckpt.history_len, mode=ckpt.mode,
            base_arrays_f32=base_arrays)


def load_policy(ckpt):
    """Instantiate the right wrapper for a checkpoint's stage tag."""
    if ckpt.stage in ("wbc", "baseline_vanilla"):
        return WbcPolicy.from_checkpoint(ckpt)
    if ckpt.stage == "teacher":
        return TeacherComposite.from_checkpoint(ckpt)
    if ckpt.stage == "student":
        return StudentPolicy.from_checkpoint(ckpt)
    if ckpt.stage == "baseline_explicit":
        return ExplicitGoalPolicy.from_checkpoint(ckpt)
    raise CheckpointError("layout_mismatch", f"unknown stage {ckpt.stage!r}")
