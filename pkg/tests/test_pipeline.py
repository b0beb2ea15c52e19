import numpy as np
import pytest

from cocarry.checkpoint import load_checkpoint, save_checkpoint
from cocarry.config import RunConfig
from cocarry.env import VecEnv
from cocarry.pipeline import (distill_student, train_baseline_explicit,
                              train_baseline_vanilla, train_teacher, train_wbc)
from cocarry.policies import (StudentPolicy, TeacherComposite, WbcPolicy,
                              compose_action, load_policy)


def tiny_cfg(**over):
    cfg = RunConfig()
    cfg.run.hidden = [32, 32]
    cfg.run.history = 5
    cfg.ppo.num_envs = 4
    cfg.ppo.horizon = 8
    cfg.distill.rounds = 2
    cfg.distill.bc_epochs = 2
    cfg.distill.steps_per_round = 8
    cfg.run.episode_seconds = 4.0
    for k, v in over.items():
        setattr(cfg.run, k, v)
    return cfg


@pytest.fixture(scope="module")
def tiny_wbc():
    return train_wbc(tiny_cfg(), seed=5, budget=64)


# ---------------------------------------------------------- compose_action

def test_compose_identity_residual():
    a = np.array([0.1, -0.2, 3.9])
    assert np.array_equal(compose_action(a, np.zeros(3)), a)


def test_compose_zero_base():
    a = np.array([0.5, -4.5, 1.0])
    out = compose_action(np.zeros(3), a)
    assert np.array_equal(out, np.array([0.5, -4.0, 1.0]))


def test_compose_clamps_at_limit():
    out = compose_action(np.array([3.0]), np.array([2.0]))
    assert out[0] == 4.0


# ------------------------------------------------------------ stage 1

def test_wbc_zero_budget_equals_init(tiny_cfg_seed=9):
    a = train_wbc(tiny_cfg(), seed=tiny_cfg_seed, budget=0)
    b = train_wbc(tiny_cfg(), seed=tiny_cfg_seed, budget=0)
    assert a.train_steps == 0
    for k in a.arrays:
        assert np.array_equal(a.arrays[k], b.arrays[k])


def test_wbc_determinism():
    a = train_wbc(tiny_cfg(), seed=3, budget=64)
    b = train_wbc(tiny_cfg(), seed=3, budget=64)
    assert list(a.arrays) == list(b.arrays)
    for k in a.arrays:
        assert np.array_equal(a.arrays[k], b.arrays[k]), k


def test_wbc_checkpoint_round_trip(tmp_path, tiny_wbc):
    p = tmp_path / "wbc.ckpt"
    save_checkpoint(tiny_wbc, p)
    lk = load_checkpoint(p)
    pol = load_policy(lk)
    assert isinstance(pol, WbcPolicy)
    cfg = tiny_cfg()
    env = VecEnv(cfg, num_envs=2, stage="wbc", mode="leader", seed=0,
                 history_len=lk.history_len)
    obs, _ = env.reset()
    act = pol.act(obs)
    assert act.shape == (2, 12)
    assert np.all(np.isfinite(act))


# ------------------------------------------------------------ stage 2

def test_teacher_base_frozen_bitwise(tiny_wbc):
    cfg = tiny_cfg()
    t = train_teacher(cfg, tiny_wbc, mode="follower", seed=11, budget=64)
    for k, v in tiny_wbc.arrays.items():
        assert np.array_equal(t.arrays[f"base.{k}"], v), f"base array {k} changed"


def test_teacher_zero_init_residual_matches_base(tiny_wbc):
    cfg = tiny_cfg()
    t = train_teacher(cfg, tiny_wbc, mode="leader", seed=12, budget=0)
    teacher = TeacherComposite.from_checkpoint(t)
    env = VecEnv(cfg, num_envs=2, stage="collab", mode="leader", seed=1,
                 history_len=t.history_len)
    obs, priv = env.reset()
    a_teacher = teacher.act(obs, priv)
    a_base = teacher.base.act(obs)
    assert np.allclose(a_teacher, np.clip(a_base, -4, 4), atol=1e-12)


def test_teacher_determinism(tiny_wbc):
    a = train_teacher(tiny_cfg(), tiny_wbc, mode="follower", seed=13, budget=64)
    b = train_teacher(tiny_cfg(), tiny_wbc, mode="follower", seed=13, budget=64)
    for k in a.arrays:
        assert np.array_equal(a.arrays[k], b.arrays[k]), k


def test_teacher_requires_wbc_stage(tiny_wbc):
    t = train_teacher(tiny_cfg(), tiny_wbc, mode="leader", seed=1, budget=0)
    with pytest.raises(ValueError):
        train_teacher(tiny_cfg(), t, mode="leader", seed=1, budget=0)


# ------------------------------------------------------------ stage 3

def test_distill_runs_and_round_trips(tmp_path, tiny_wbc):
    cfg = tiny_cfg()
    t = train_teacher(cfg, tiny_wbc, mode="follower", seed=21, budget=64)
    s = distill_student(cfg, t, seed=22)
    assert s.stage == "student" and s.mode == "follower"
    assert "holdout_mse" in s.extra
    p = tmp_path / "student.ckpt"
    save_checkpoint(s, p)
    pol = load_policy(load_checkpoint(p))
    assert isinstance(pol, StudentPolicy)
    env = VecEnv(cfg, num_envs=2, stage="collab", mode="follower", seed=2,
                 history_len=s.history_len)
    obs, _ = env.reset()
    assert pol.act(obs).shape == (2, 12)


def test_distill_determinism(tiny_wbc):
    cfg = tiny_cfg()
    t = train_teacher(cfg, tiny_wbc, mode="follower", seed=23, budget=64)
    a = distill_student(cfg, t, seed=24)
    b = distill_student(cfg, t, seed=24)
    for k in a.arrays:
        assert np.array_equal(a.arrays[k], b.arrays[k]), k


# ------------------------------------------------------------ baselines

def test_vanilla_zero_budget_equals_wbc_weights(tiny_wbc):
    v = train_baseline_vanilla(tiny_cfg(), tiny_wbc, mode="leader", seed=30, budget=0)
    assert v.stage == "baseline_vanilla"
    for k in ("actor.0.W", "actor.log_std", "critic.0.W", "norm.mean"):
        assert np.array_equal(v.arrays[k], tiny_wbc.arrays[k])


def test_explicit_baseline_runs(tiny_wbc):
    cfg = tiny_cfg()
    e = train_baseline_explicit(cfg, tiny_wbc, seed=31, budget=64)
    assert e.stage == "baseline_explicit"
    pol = load_policy(e)
    env = VecEnv(cfg, num_envs=2, stage="collab", mode="follower", seed=3,
                 history_len=e.history_len)
    obs, _ = env.reset()
    goal = pol.predict_goal(obs)
    assert np.all(goal >= pol.goal_low - 1e-12)
    assert np.all(goal <= pol.goal_high + 1e-12)
    assert pol.act(obs).shape == (2, 12)


def test_explicit_oracle_estimator_matches_wbc(tiny_wbc):
    # feeding the true goal reproduces the goal-conditioned WBC exactly
    cfg = tiny_cfg()
    e = train_baseline_explicit(cfg, tiny_wbc, seed=32, budget=0)
    pol = load_policy(e)
    env = VecEnv(cfg, num_envs=2, stage="collab", mode="leader", seed=4,
                 history_len=e.history_len)
    obs, _ = env.reset()
    true_goal = obs[:, -12:]
    a = pol.act(obs, goal_override=true_goal)
    b = pol.base.act(obs)
    assert np.allclose(a, b, atol=1e-12)
