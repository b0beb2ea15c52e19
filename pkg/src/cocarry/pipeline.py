"""Three-stage training pipeline and baselines.

Stage 1 trains the goal-conditioned whole-body controller with PPO under
end-effector perturbations. Stage 2 freezes it and trains a privileged
residual teacher in the closed-loop carrying environment. Stage 3 distills
teacher behavior into a proprioception-only student with on-environment
behavioral cloning (DAgger-style mixing).

Every run is a pure function of (config, seed): command streams, network
initialization, exploration noise and minibatch shuffles all derive from the
seed, so reruns produce bitwise-identical checkpoints.
"""

import csv
import os

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .env import VecEnv
from .learn import (AdamState, GaussianPolicy, RolloutBuffer, RunningNorm,
                    PpoConfig, bc_loss, bc_update, forward, gaussian_log_prob,
                    init_mlp, ppo_update, sample_actions)
from .observations import GOAL_DIM
from .policies import (DEFAULT_GOAL_TILE, ExplicitGoalPolicy, StudentPolicy,
                       TeacherComposite, WbcPolicy, compose_action,
                       feature_dim, featurize, load_policy)


class TrainLog:
    """CSV training statistics; one row per PPO iteration."""

    FIELDS = ["iteration", "env_steps", "reward_mean", "reward_std",
              "episode_len_mean", "policy_loss", "value_loss", "entropy",
              "grad_norm", "approx_kl"]

    def __init__(self, path):
        self.path = path
        self.rows = []
        if path:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            self._f = open(path, "w", newline="")
            self._w = csv.DictWriter(self._f, fieldnames=self.FIELDS)
            self._w.writeheader()
        else:
            self._f = None

    def add(self, **row):
        self.rows.append(row)
        if self._f:
            self._w.writerow({k: row.get(k, "") for k in self.FIELDS})
            self._f.flush()

    def close(self):
        if self._f:
            self._f.close()
            self._f = None


def _rngs(seed, n):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n)]


def _collect(env, obs, priv, actor_obs_fn, exec_fn, policy, critic, T, rng,
             track_episodes=None):
    """Generic PPO rollout: returns (buffer, next_obs, next_priv, reward_info)."""
    B = env.B
    a_dim = policy.log_std.shape[0]
    obs_dim = actor_obs_fn(obs, priv).shape[1]
    buf_obs = np.empty((T, B, obs_dim))
    buf_act = np.empty((T, B, a_dim))
    buf_logp = np.empty((T, B))
    buf_val = np.empty((T + 1, B))
    buf_rew = np.empty((T, B))
    buf_done = np.empty((T, B))
    raw_obs = np.empty((T, B, obs.shape[1]))
    reward_sum = 0.0
    reward_sq = 0.0
    for t in range(T):
        ao = actor_obs_fn(obs, priv)
        mean, _ = forward(policy.net, ao)
        act = sample_actions(rng, mean, policy.log_std)
        logp = gaussian_log_prob(mean, policy.log_std, act)
        val, _ = forward(critic, ao)
        exec_action = exec_fn(obs, priv, act)
        raw_obs[t] = obs
        buf_obs[t] = ao
        buf_act[t] = act
        buf_logp[t] = logp
        buf_val[t] = val[:, 0]
        obs, priv, rew, done, info = env.step(exec_action)
        buf_rew[t] = rew
        buf_done[t] = done
        reward_sum += float(rew.sum())
        reward_sq += float((rew * rew).sum())
        if track_episodes is not None:
            track_episodes.append((rew.copy(), done.copy(), info))
    ao = actor_obs_fn(obs, priv)
    val, _ = forward(critic, ao)
    buf_val[T] = val[:, 0]
    buffer = RolloutBuffer(obs=buf_obs, actions=buf_act, log_probs=buf_logp,
                           values=buf_val, rewards=buf_rew, dones=buf_done)
    n = T * B
    mean_r = reward_sum / n
    std_r = max(0.0, reward_sq / n - mean_r ** 2) ** 0.5
    return buffer, obs, priv, raw_obs, (mean_r, std_r)


def _ppo_train(env, actor_obs_fn, exec_fn, policy, critic, budget_steps,
               ppo_cfg, rng_sample, rng_shuffle, log, norm=None):
    """Shared PPO loop; returns total env steps consumed.

    If `norm` is given (stage 1) its statistics are updated after each
    iteration's rollout; later stages run with frozen statistics.
    """
    obs, priv = env.reset()
    steps_per_iter = ppo_cfg.horizon * ppo_cfg.num_envs
    iters = max(0, int(budget_steps) // steps_per_iter)
    p_opt = AdamState.for_params(policy.net.flat() + [policy.log_std], lr=ppo_cfg.lr)
    c_opt = AdamState.for_params(critic.flat(), lr=ppo_cfg.lr)
    total = 0
    # value targets live on the per-step reward scale: discounted returns are
    # rescaled by (1 - gamma), which leaves normalized advantages unchanged
    # but lets the clipped critic converge from scratch at desk budgets
    r_scale = 1.0 - ppo_cfg.gamma
    for it in range(iters):
        buffer, obs, priv, raw_obs, (mr, sr) = _collect(
            env, obs, priv, actor_obs_fn, exec_fn, policy, critic,
            ppo_cfg.horizon, rng_sample)
        buffer.rewards = buffer.rewards * r_scale
        buffer.finalize(ppo_cfg.gamma, ppo_cfg.lam)
        stats = ppo_update(policy, critic, p_opt, c_opt, buffer, ppo_cfg, rng_shuffle)
        if norm is not None:
            norm.update(raw_obs.reshape(-1, raw_obs.shape[-1]))
        total += steps_per_iter
        log.add(iteration=it, env_steps=total, reward_mean=round(mr, 6),
                reward_std=round(sr, 6),
                policy_loss=round(stats.policy_loss, 6),
                value_loss=round(stats.value_loss, 6),
                entropy=round(stats.entropy, 6),
                grad_norm=round(stats.grad_norm, 6),
                approx_kl=round(stats.approx_kl, 6))
    return total


def train_wbc(cfg, seed=None, budget=None, out=None, log_csv=None):
    """Stage 1: goal-tracking whole-body controller."""
    seed = cfg.run.seed if seed is None else seed
    budget = cfg.run.stage1_env_steps if budget is None else budget
    r_init, r_sample, r_shuffle = _rngs(seed, 3)
    ppo_cfg = PpoConfig.from_config(cfg.ppo)
    env = VecEnv(cfg, num_envs=ppo_cfg.num_envs, stage="wbc", mode="leader",
                 seed=seed)
    obs_dim = env.wbc_obs_dim
    tile = DEFAULT_GOAL_TILE
    in_dim = feature_dim(obs_dim, tile)
    hidden = list(cfg.run.hidden)
    actor = init_mlp(r_init, [in_dim] + hidden + [12], scale_last=0.01)
    critic = init_mlp(r_init, [in_dim] + hidden + [1])
    policy = GaussianPolicy(net=actor, log_std=np.full(12, ppo_cfg.init_log_std))
    norm = RunningNorm.for_dim(obs_dim)

    def actor_obs(obs, priv):
        return featurize(norm.normalize(obs), tile)

    def execute(obs, priv, act):
        return act

    log = TrainLog(log_csv)
    total = _ppo_train(env, actor_obs, execute, policy, critic, budget,
                       ppo_cfg, r_sample, r_shuffle, log, norm=norm)
    log.close()
    norm.frozen = True
    wp = WbcPolicy(norm=norm, actor=policy.net, log_std=policy.log_std,
                   critic=critic, history_len=env.history_len, mode="leader",
                   goal_tile=tile)
    ckpt = wp.to_checkpoint(stage="wbc", seed=seed, train_steps=total, hidden=hidden)
    if out:
        save_checkpoint(ckpt, out)
    return ckpt


def train_teacher(cfg, wbc_ckpt, mode=None, seed=None, budget=None, out=None,
                  log_csv=None):
    """Stage 2: privileged residual teacher on top of the frozen WBC."""
    if wbc_ckpt.stage != "wbc":
        raise ValueError(f"train_teacher needs a wbc checkpoint, got {wbc_ckpt.stage!r}")
    seed = cfg.run.seed if seed is None else seed
    budget = cfg.run.stage2_env_steps if budget is None else budget
    mode = mode or cfg.run.mode
    r_init, r_sample, r_shuffle = _rngs(seed + 1000, 3)
    ppo_cfg = PpoConfig.from_config(cfg.ppo)
    env = VecEnv(cfg, num_envs=ppo_cfg.num_envs, stage="collab", mode=mode,
                 seed=seed, history_len=wbc_ckpt.history_len)
    base = WbcPolicy.from_checkpoint(wbc_ckpt)
    base.norm.frozen = True
    in_dim = feature_dim(env.wbc_obs_dim, base.goal_tile) + env.priv_obs_dim
    hidden = list(cfg.run.hidden)
    res = init_mlp(r_init, [in_dim] + hidden + [12], zero_last=True)
    res_critic = init_mlp(r_init, [in_dim] + hidden + [1])
    policy = GaussianPolicy(net=res, log_std=np.full(12, ppo_cfg.init_log_std))
    scale = cfg.run.residual_scale

    def actor_obs(obs, priv):
        return np.concatenate([base.features(obs), priv], axis=1)

    def execute(obs, priv, act):
        return compose_action(base.act(obs), scale * act)

    log = TrainLog(log_csv)
    total = _ppo_train(env, actor_obs, execute, policy, res_critic, budget,
                       ppo_cfg, r_sample, r_shuffle, log)
    log.close()
    teacher = TeacherComposite(
        base=base, residual=policy.net, res_log_std=policy.log_std,
        res_critic=res_critic, residual_scale=scale,
        history_len=env.history_len, mode=mode,
        base_arrays_f32=dict(wbc_ckpt.arrays))
    ckpt = teacher.to_checkpoint(seed=seed, train_steps=total, hidden=hidden)
    if out:
        save_checkpoint(ckpt, out)
    return ckpt


def distill_student(cfg, teacher_ckpt, seed=None, out=None, log_csv=None,
                    rounds=None):
    """Stage 3: DAgger-style behavioral cloning into a proprioception-only student."""
    if teacher_ckpt.stage != "teacher":
        raise ValueError(f"distill_student needs a teacher checkpoint, got {teacher_ckpt.stage!r}")
    seed = cfg.run.seed if seed is None else seed
    d = cfg.distill
    rounds = d.rounds if rounds is None else rounds
    r_init, r_mix, r_shuffle = _rngs(seed + 2000, 3)
    teacher = TeacherComposite.from_checkpoint(teacher_ckpt)
    mode = teacher.mode
    env = VecEnv(cfg, num_envs=cfg.ppo.num_envs, stage="collab", mode=mode,
                 seed=seed + 2000, history_len=teacher_ckpt.history_len)
    obs_dim = env.wbc_obs_dim
    tile = teacher.base.goal_tile
    hidden = list(cfg.run.hidden)
    student = init_mlp(r_init, [feature_dim(obs_dim, tile)] + hidden + [12])
    opt = AdamState.for_params(student.flat(), lr=d.lr)
    norm = teacher.base.norm

    data_obs = []
    data_act = []
    holdout = None
    log = TrainLog(log_csv)
    obs, priv = env.reset()
    total_steps = 0
    for rnd in range(rounds):
        beta = d.beta_decay ** rnd
        for _ in range(d.steps_per_round):
            obs_n = featurize(norm.normalize(obs), tile)
            label = teacher.act(obs, priv)
            s_act, _ = forward(student, obs_n)
            use_teacher = r_mix.uniform(size=env.B) < beta
            exec_action = np.where(use_teacher[:, None], label, s_act)
            # float32 storage keeps the aggregated dataset a few hundred MB
            data_obs.append(obs_n.astype(np.float32))
            data_act.append(label.astype(np.float32))
            obs, priv, _, _, _ = env.step(exec_action)
            total_steps += env.B
        X = np.concatenate(data_obs, axis=0)
        Y = np.concatenate(data_act, axis=0)
        n_hold = max(1, int(len(X) * d.holdout_fraction))
        perm = r_shuffle.permutation(len(X))
        hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
        holdout = (X[hold_idx], Y[hold_idx])
        losses = []
        for _ in range(d.bc_epochs):
            order = r_shuffle.permutation(len(train_idx))
            for start in range(0, len(order), d.batch_size):
                sel = train_idx[order[start:start + d.batch_size]]
                losses.append(bc_update(student, opt, X[sel].astype(float),
                                        Y[sel].astype(float)))
        hold_mse = bc_loss(student, holdout[0].astype(float), holdout[1].astype(float))
        log.add(iteration=rnd, env_steps=total_steps,
                reward_mean=round(float(np.mean(losses)), 8),
                value_loss=round(hold_mse, 8), entropy=beta)
    log.close()
    hold_mse = (bc_loss(student, holdout[0].astype(float), holdout[1].astype(float))
                if holdout is not None else float("nan"))
    sp = StudentPolicy(norm=norm, net=student, history_len=env.history_len,
                       mode=mode, goal_tile=tile)
    ckpt = sp.to_checkpoint(seed=seed, train_steps=total_steps, hidden=hidden,
                            extra={"holdout_mse": hold_mse,
                                   "teacher_train_steps": teacher_ckpt.train_steps})
    if out:
        save_checkpoint(ckpt, out)
    return ckpt


def train_baseline_vanilla(cfg, wbc_ckpt, mode=None, seed=None, budget=None,
                           out=None, log_csv=None):
    """Baseline: fine-tune the WBC end-to-end in the closed-loop environment."""
    if wbc_ckpt.stage != "wbc":
        raise ValueError("baseline needs a wbc checkpoint")
    seed = cfg.run.seed if seed is None else seed
    budget = cfg.run.stage2_env_steps if budget is None else budget
    mode = mode or cfg.run.mode
    _, r_sample, r_shuffle = _rngs(seed + 3000, 3)
    ppo_cfg = PpoConfig.from_config(cfg.ppo)
    env = VecEnv(cfg, num_envs=ppo_cfg.num_envs, stage="collab", mode=mode,
                 seed=seed, history_len=wbc_ckpt.history_len)
    base = WbcPolicy.from_checkpoint(wbc_ckpt)
    base.norm.frozen = True
    policy = GaussianPolicy(net=base.actor.copy(),
                            log_std=base.log_std.copy())
    critic = base.critic.copy()

    def actor_obs(obs, priv):
        return base.features(obs)

    def execute(obs, priv, act):
        return act

    log = TrainLog(log_csv)
    total = _ppo_train(env, actor_obs, execute, policy, critic, budget,
                       ppo_cfg, r_sample, r_shuffle, log)
    log.close()
    vp = WbcPolicy(norm=base.norm, actor=policy.net, log_std=policy.log_std,
                   critic=critic, history_len=env.history_len, mode=mode,
                   goal_tile=base.goal_tile)
    ckpt = vp.to_checkpoint(stage="baseline_vanilla", seed=seed,
                            train_steps=total, hidden=list(cfg.run.hidden))
    if out:
        save_checkpoint(ckpt, out)
    return ckpt


def train_baseline_explicit(cfg, wbc_ckpt, seed=None, budget=None, out=None,
                            log_csv=None):
    """Baseline: goal-command estimator feeding the frozen WBC, no residual.

    Trained in follower-style observations (goal slots zeroed for the
    estimator input); the executed action is the frozen WBC conditioned on the
    predicted command.
    """
    if wbc_ckpt.stage != "wbc":
        raise ValueError("baseline needs a wbc checkpoint")
    seed = cfg.run.seed if seed is None else seed
    budget = cfg.run.stage2_env_steps if budget is None else budget
    r_init, r_sample, r_shuffle = _rngs(seed + 4000, 3)
    ppo_cfg = PpoConfig.from_config(cfg.ppo)
    env = VecEnv(cfg, num_envs=ppo_cfg.num_envs, stage="collab", mode="follower",
                 seed=seed, history_len=wbc_ckpt.history_len)
    base = WbcPolicy.from_checkpoint(wbc_ckpt)
    base.norm.frozen = True
    obs_dim = feature_dim(env.wbc_obs_dim, base.goal_tile)
    hidden = list(cfg.run.hidden)
    estimator = init_mlp(r_init, [obs_dim] + hidden + [GOAL_DIM], scale_last=0.01)
    est_critic = init_mlp(r_init, [obs_dim] + hidden + [1])
    policy = GaussianPolicy(net=estimator, log_std=np.full(GOAL_DIM, -1.0))
    c = cfg.commands
    s = c.ee_cube_side * 0.5
    a = c.ee_cone_half_angle
    h0 = cfg.physics.nominal_leg
    goal_low = np.array([c.lin_vel_x[0], c.lin_vel_y[0], c.ang_vel[0],
                         c.height[0] - h0, -s, -s, -s, -a, -s, -s, -s, -a])
    goal_high = np.array([c.lin_vel_x[1], c.lin_vel_y[1], c.ang_vel[1],
                          c.height[1] - h0, s, s, s, a, s, s, s, a])

    def actor_obs(obs, priv):
        return base.features(obs)   # follower env already zeroes the goal slots

    def execute(obs, priv, act):
        goal = np.clip(act, goal_low, goal_high)
        filled = obs.copy()
        filled[:, -GOAL_DIM:] = goal
        return base.act(filled)

    log = TrainLog(log_csv)
    total = _ppo_train(env, actor_obs, execute, policy, est_critic, budget,
                       ppo_cfg, r_sample, r_shuffle, log)
    log.close()
    ep = ExplicitGoalPolicy(
        base=base, estimator=policy.net, est_log_std=policy.log_std,
        est_critic=est_critic, goal_low=goal_low, goal_high=goal_high,
        history_len=env.history_len, mode="follower",
        base_arrays_f32=dict(wbc_ckpt.arrays))
    ckpt = ep.to_checkpoint(seed=seed, train_steps=total, hidden=hidden)
    if out:
        save_checkpoint(ckpt, out)
    return ckpt
