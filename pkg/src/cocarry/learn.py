"""Self-contained function-approximation and policy-optimization stack.

Fully-connected networks with explicit reverse-mode gradients (no autograd
dependency), Adam, a diagonal-Gaussian policy head, PPO with GAE, and the
behavioral-cloning update used for distillation. Everything is float64 numpy
and deterministic given the generators passed in.
"""

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


# ------------------------------------------------------------------- MLP

@dataclass
class MlpParams:
    """Ordered (W, b) pairs; hidden activation ELU, linear output."""

    weights: list          # [(out, in) arrays]
    biases: list           # [(out,) arrays]
    activation: str = "elu"

    def copy(self):
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.activation)

    def flat(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]


def init_mlp(rng, sizes, zero_last=False, scale_last=None):
    """He-initialized MLP over layer sizes [in, h1, ..., out].

    `zero_last` zeroes the output layer (residual heads start as the identity
    correction); `scale_last` shrinks it (policy means start near zero).
    """
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / a), size=(b, a)))
        biases.append(np.zeros(b))
    if zero_last:
        weights[-1][:] = 0.0
    elif scale_last is not None:
        weights[-1] *= scale_last
    return MlpParams(weights=weights, biases=biases)


def _elu(z):
    return np.where(z > 0.0, z, np.expm1(z))


def _elu_grad(z):
    return np.where(z > 0.0, 1.0, np.exp(z))


def forward(net, x):
    """Forward pass; x is (B, in) or (in,). Returns (y, cache)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != net.in_dim:
        raise ValueError(f"input dim {x.shape[1]} != first layer {net.in_dim}")
    acts = [x]
    pre = []
    h = x
    n = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = _elu(z) if i < n - 1 else z
        acts.append(h)
    return acts[-1], (acts, pre)


def backward(net, cache, dy):
    """Exact gradients of the forward composition.

    dy is dL/dy with the same shape as the forward output. Returns
    (grads, dx) where grads mirrors net.flat() ordering [dW0, db0, dW1, ...].
    """
    acts, pre = cache
    if len(acts) != len(net.weights) + 1:
        raise ValueError("stale or mismatched forward cache")
    dy = np.atleast_2d(np.asarray(dy, dtype=float))
    grads = []
    delta = dy
    n = len(net.weights)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            delta = delta * _elu_grad(pre[i])
        dW = delta.T @ acts[i]
        db = delta.sum(axis=0)
        grads.append(db)
        grads.append(dW)
        if i > 0:
            delta = delta @ net.weights[i]
        else:
            dx = delta @ net.weights[0]
    grads.reverse()
    return grads, dx


def finite_difference_grads(net, x, loss_fn, h=1e-5):
    """Central finite differences of loss_fn(forward output) wrt every parameter."""
    grads = []
    for arr in net.flat():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up, _ = forward(net, x)
            arr[idx] = old - h
            dn, _ = forward(net, x)
            arr[idx] = old
            g[idx] = (loss_fn(up) - loss_fn(dn)) / (2.0 * h)
            it.iternext()
        grads.append(g)
    return grads


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params_flat, lr=3e-4):
        return AdamState(m=[np.zeros_like(p) for p in params_flat],
                         v=[np.zeros_like(p) for p in params_flat], lr=lr)


def adam_step(state, params_flat, grads_flat):
    """Bias-corrected Adam; updates parameters in place, returns them."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params_flat, grads_flat, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params_flat


def clip_grad_norm(grads_flat, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads_flat))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        grads_flat = [g * scale for g in grads_flat]
    return grads_flat, total


# ------------------------------------------------- diagonal Gaussian head

@dataclass
class GaussianPolicy:
    """State-independent log-std actor; the mean comes from `net`."""

    net: MlpParams
    log_std: np.ndarray

    LOG_STD_MIN = -5.0
    LOG_STD_MAX = 2.0

    def copy(self):
        return GaussianPolicy(self.net.copy(), self.log_std.copy())

    def clamp(self):
        np.clip(self.log_std, self.LOG_STD_MIN, self.LOG_STD_MAX, out=self.log_std)


def gaussian_log_prob(mean, log_std, actions):
    """Diagonal-Gaussian log density, (B,)."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]


def gaussian_entropy(log_std):
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def sample_actions(rng, mean, log_std):
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


# -------------------------------------------------------------------- GAE

def compute_gae(rewards, values, dones, gamma, lam):
    """Backward GAE recursion with done masking.

    rewards, dones: (T, B); values: (T+1, B) including the bootstrap row.
    Returns (advantages, returns), each (T, B).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T, B = rewards.shape
    if values.shape != (T + 1, B):
        raise ValueError("values must have one bootstrap row beyond the horizon")
    adv = np.zeros((T, B))
    acc = np.zeros(B)
    for t in range(T - 1, -1, -1):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * mask - values[t]
        acc = delta + gamma * lam * mask * acc
        adv[t] = acc
    return adv, adv + values[:-1]


# -------------------------------------------------------------------- PPO

@dataclass
class RolloutBuffer:
    obs: np.ndarray            # (T, B, Dobs)
    actions: np.ndarray        # (T, B, A)
    log_probs: np.ndarray      # (T, B)
    values: np.ndarray         # (T+1, B)
    rewards: np.ndarray        # (T, B)
    dones: np.ndarray          # (T, B)
    advantages: np.ndarray = None
    returns: np.ndarray = None

    def finalize(self, gamma, lam):
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, gamma, lam)
        return self


@dataclass
class PpoConfig:
    clip_ratio: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    lr: float = 3e-4
    max_grad_norm: float = 1.0
    horizon: int = 24
    num_envs: int = 64
    init_log_std: float = 0.0
    # adapt the step size toward this KL per update (None disables)
    desired_kl: float = 0.008
    # soft bound keeping policy means inside the executed-action clip range;
    # without it means drift past the clip where no behavioral gradient exists
    action_bound: float = 3.6
    bounds_coef: float = 1.0

    @staticmethod
    def from_config(section):
        return PpoConfig(clip_ratio=section.clip_ratio, gamma=section.gamma,
                         lam=section.lam, epochs=section.epochs,
                         minibatches=section.minibatches,
                         entropy_coef=section.entropy_coef,
                         value_coef=section.value_coef, lr=section.lr,
                         max_grad_norm=section.max_grad_norm,
                         horizon=section.horizon, num_envs=section.num_envs,
                         init_log_std=section.init_log_std,
                         desired_kl=getattr(section, "desired_kl", 0.008),
                         action_bound=getattr(section, "action_bound", 3.6),
                         bounds_coef=getattr(section, "bounds_coef", 1.0))


@dataclass
class PpoStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    grad_norm: float = 0.0
    approx_kl: float = 0.0
    ratio_min: float = 1.0
    ratio_max: float = 1.0
    aborted: bool = False


def ppo_update(policy, critic, policy_opt, critic_opt, buffer, cfg, rng,
               ratio_probe=None):
    """Clipped-surrogate PPO over the rollout buffer.

    Advantages are normalized over the whole batch before the epoch loop.
    A non-finite loss aborts the update and rolls parameters back to the
    pre-update snapshot. `ratio_probe(epoch, ratios)` is a test hook.
    """
    T, B = buffer.rewards.shape
    N = T * B
    obs = buffer.obs.reshape(N, -1)
    actions = buffer.actions.reshape(N, -1)
    logp_old = buffer.log_probs.reshape(N)
    v_old = buffer.values[:-1].reshape(N)
    returns = buffer.returns.reshape(N)
    adv = buffer.advantages.reshape(N).copy()
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    snap_policy = policy.copy()
    snap_critic = critic.copy()

    idx = np.arange(N)
    mb_size = N // cfg.minibatches
    stats = PpoStats()
    n_updates = 0
    stop = False
    for epoch in range(cfg.epochs):
        if stop:
            break
        rng.shuffle(idx)
        for mb in range(cfg.minibatches):
            sel = idx[mb * mb_size:(mb + 1) * mb_size]
            o, a = obs[sel], actions[sel]
            A = adv[sel]
            mean, cache = forward(policy.net, o)
            logp = gaussian_log_prob(mean, policy.log_std, a)
            ratio = np.exp(logp - logp_old[sel])
            if ratio_probe is not None:
                ratio_probe(epoch, ratio)
            if cfg.desired_kl is not None:
                # early-stop the update once the policy has moved far enough
                kl = float(np.mean(logp_old[sel] - logp))
                if kl > 1.5 * cfg.desired_kl:
                    stats.approx_kl += kl
                    n_updates += 1
                    stop = True
                    break
            clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
            surr = np.minimum(ratio * A, clipped * A)
            policy_loss = -float(surr.mean())
            entropy = gaussian_entropy(policy.log_std)

            v, vcache = forward(critic, o)
            v = v[:, 0]
            v_clip = v_old[sel] + np.clip(v - v_old[sel], -cfg.clip_ratio, cfg.clip_ratio)
            vloss_vec = np.maximum((v - returns[sel]) ** 2, (v_clip - returns[sel]) ** 2)
            value_loss = 0.5 * float(vloss_vec.mean())

            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(loss):
                policy.net = snap_policy.net
                policy.log_std = snap_policy.log_std
                critic.weights = snap_critic.weights
                critic.biases = snap_critic.biases
                stats.aborted = True
                return stats

            # d(policy_loss)/d(mean) and /d(log_std) through the surrogate
            unclipped_active = (ratio * A) <= (clipped * A)
            dsurr_dlogp = np.where(unclipped_active, ratio * A, 0.0)
            dL_dlogp = -dsurr_dlogp / len(sel)
            std = np.exp(policy.log_std)
            zed = (a - mean) / std
            dlogp_dmean = zed / std
            dmean = dL_dlogp[:, None] * dlogp_dmean
            if cfg.bounds_coef > 0.0:
                over = np.sign(mean) * np.maximum(np.abs(mean) - cfg.action_bound, 0.0)
                dmean = dmean + cfg.bounds_coef * 2.0 * over / len(sel)
            dlogp_dlogstd = zed * zed - 1.0
            g_logstd = (dL_dlogp[:, None] * dlogp_dlogstd).sum(axis=0)
            g_logstd -= cfg.entropy_coef * np.ones_like(policy.log_std)

            pgrads, _ = backward(policy.net, cache, dmean)
            pflat = policy.net.flat() + [policy.log_std]
            pg = pgrads + [g_logstd]
            pg, gnorm = clip_grad_norm(pg, cfg.max_grad_norm)
            adam_step(policy_opt, pflat, pg)
            policy.clamp()

            # value head gradient (branch-aware clipped value loss)
            use_clip = (v_clip - returns[sel]) ** 2 >= (v - returns[sel]) ** 2
            in_band = np.abs(v - v_old[sel]) <= cfg.clip_ratio
            dv = np.where(use_clip, np.where(in_band, v_clip - returns[sel], 0.0),
                          v - returns[sel])
            dv = cfg.value_coef * dv / len(sel)
            cgrads, _ = backward(critic, vcache, dv[:, None])
            cgrads, _ = clip_grad_norm(cgrads, cfg.max_grad_norm)
            adam_step(critic_opt, critic.flat(), cgrads)

            stats.policy_loss += policy_loss
            stats.value_loss += value_loss
            stats.entropy = entropy
            stats.grad_norm += gnorm
            stats.approx_kl += float(np.mean(logp_old[sel] - logp))
            stats.ratio_min = min(stats.ratio_min, float(ratio.min()))
            stats.ratio_max = max(stats.ratio_max, float(ratio.max()))
            n_updates += 1
    for f in ("policy_loss", "value_loss", "grad_norm", "approx_kl"):
        setattr(stats, f, getattr(stats, f) / max(1, n_updates))
    return stats


# ------------------------------------------------------ distillation (BC)

def bc_update(student, opt, batch_obs, batch_targets):
    """One mean-squared-error behavioral-cloning step; returns the loss."""
    y, cache = forward(student, batch_obs)
    err = y - batch_targets
    loss = float(np.mean(err * err))
    dy = 2.0 * err / err.size
    grads, _ = backward(student, cache, dy)
    adam_step(opt, student.flat(), grads)
    return loss


def bc_loss(student, batch_obs, batch_targets):
    y, _ = forward(student, batch_obs)
    return float(np.mean((y - batch_targets) ** 2))


# ------------------------------------------------------------- normalizer

@dataclass
class RunningNorm:
    """Streaming mean/variance used to whiten observations.

    Accumulated during stage-1 training and frozen afterwards so every later
    stage sees identical input statistics.
    """

    mean: np.ndarray
    var: np.ndarray
    count: float = 1e-4
    frozen: bool = False

    @staticmethod
    def for_dim(dim):
        return RunningNorm(mean=np.zeros(dim), var=np.ones(dim))

    def update(self, x):
        if self.frozen:
            return
        x = np.atleast_2d(x)
        bmean = x.mean(axis=0)
        bvar = x.var(axis=0)
        bcount = x.shape[0]
        delta = bmean - self.mean
        tot = self.count + bcount
        self.mean = self.mean + delta * bcount / tot
        m_a = self.var * self.count
        m_b = bvar * bcount
        self.var = (m_a + m_b + delta * delta * self.count * bcount / tot) / tot
        self.count = tot

    def normalize(self, x):
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -10.0, 10.0)

    def copy(self):
        return RunningNorm(self.mean.copy(), self.var.copy(), self.count, self.frozen)
