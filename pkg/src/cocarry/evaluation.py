"""Quantitative evaluation: compliance metrics, force-ramp and vertical-force
experiments, and report emission.

Paired comparisons are guaranteed by construction: command streams depend only
on (seed, env slot, episode index), so two policies evaluated with the same
seed face identical goals, applied velocities and noise, episode by episode.
"""

import copy
import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import RunConfig
from .env import VecEnv

REPORT_COLUMNS = ["policy", "lin_vel", "ang_vel", "height_err", "avg_ef",
                  "episodes", "seed"]


@dataclass
class MetricsReport:
    policy: str
    lin_vel_err: float
    ang_vel_err: float
    height_err: float
    avg_ef: float
    episodes: int
    seed: int
    completed: int = 0
    early_terminated: int = 0
    diverged: int = 0
    mean_episode_steps: float = 0.0

    def row(self):
        return {"policy": self.policy, "lin_vel": self.lin_vel_err,
                "ang_vel": self.ang_vel_err, "height_err": self.height_err,
                "avg_ef": self.avg_ef, "episodes": self.episodes,
                "seed": self.seed}


@dataclass
class ExperimentTrace:
    t: np.ndarray
    applied_force: np.ndarray
    base_speed: np.ndarray
    base_height: np.ndarray
    end_heights: np.ndarray
    joint_force: np.ndarray


def evaluate(policy, cfg, n_episodes=50, seed=0, mode=None, policy_id="policy",
             log_writer=None):
    """Run n_episodes (in parallel slots) and average the four metrics.

    Per-step errors are averaged within each episode, then across episodes.
    Early-terminated episodes contribute the steps they lived and are counted
    separately; diverged episodes are excluded from the averages.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    mode = mode or cfg.run.mode
    env = VecEnv(cfg, num_envs=n_episodes, stage="collab", mode=mode,
                 seed=seed, log_writer=log_writer)
    obs, priv = env.reset()
    B = env.B
    finished = np.zeros(B, dtype=bool)
    acc = {k: np.zeros(B) for k in ("lin", "ang", "h", "ef", "steps")}
    reason = np.zeros(B, dtype=int)
    max_steps = env.episode_len + 2
    for _ in range(max_steps):
        act = policy.act(obs, priv)
        obs, priv, _, dones, info = env.step(act)
        live = ~finished
        verr = info.obj_vel[:, :2] - info.v_applied
        acc["lin"][live] += np.sqrt(np.sum(verr * verr, axis=1))[live]
        acc["ang"][live] += np.abs(info.obj_yaw_rate - info.ang_goal)[live]
        acc["h"][live] += np.abs(info.end_heights[:, 0] - info.end_heights[:, 1])[live]
        acc["ef"][live] += info.joint_force_h[live]
        acc["steps"][live] += 1
        newly = live & dones
        reason[newly] = info.termination[newly]
        finished |= dones
        if np.all(finished):
            break
    steps = np.maximum(acc["steps"], 1)
    ok = reason != 4
    per_ep = {k: acc[k] / steps for k in ("lin", "ang", "h", "ef")}
    n_ok = max(1, int(ok.sum()))
    return MetricsReport(
        policy=policy_id,
        lin_vel_err=float(per_ep["lin"][ok].sum() / n_ok),
        ang_vel_err=float(per_ep["ang"][ok].sum() / n_ok),
        height_err=float(per_ep["h"][ok].sum() / n_ok),
        avg_ef=float(per_ep["ef"][ok].sum() / n_ok),
        episodes=n_episodes, seed=seed,
        completed=int(np.sum(reason == 1)),
        early_terminated=int(np.sum((reason != 1) & ok)),
        diverged=int(np.sum(~ok)),
        mean_episode_steps=float(acc["steps"].mean()))


def _experiment_cfg(cfg, duration):
    """Carrier-only probe configuration: still goals, no random perturbations."""
    c = copy.deepcopy(cfg)
    c.commands.lin_vel_x = [0.0, 0.0]
    c.commands.lin_vel_y = [0.0, 0.0]
    c.commands.ang_vel = [0.0, 0.0]
    c.commands.height = [c.physics.nominal_leg, c.physics.nominal_leg]
    c.commands.ee_cube_side = 0.0
    c.commands.ee_cone_half_angle = 0.0
    c.run.perturb_force_max = 0.0
    c.run.episode_seconds = duration + 1.0
    return c


def force_ramp_experiment(policy, cfg, f_max=None, duration=None, mode="follower",
                          seed=0):
    """Ramp a forward force on both hand points from 0 to f_max over `duration`
    and record the base's speed response. The carrier runs alone (no object)."""
    f_max = cfg.evaluation.ramp_force_max if f_max is None else f_max
    duration = cfg.evaluation.ramp_duration_s if duration is None else duration
    ecfg = _experiment_cfg(cfg, duration)
    env = VecEnv(ecfg, num_envs=1, stage="wbc", mode=mode, seed=seed)
    obs, priv = env.reset()
    steps = int(round(duration / env.policy_dt))
    rows = []
    for k in range(steps):
        f = f_max * (k / max(1, steps - 1))
        hand_forces = np.zeros((1, 2, 3))
        hand_forces[0, :, 0] = f
        act = policy.act(obs, priv)
        obs, priv, _, dones, info = env.step(act, extra_hand_forces=hand_forces)
        rows.append((env.policy_dt * (k + 1), f, float(info.base_speed[0]),
                     float(info.base_height[0])))
    t, f, v, h = map(np.array, zip(*rows))
    n = len(rows)
    return ExperimentTrace(t=t, applied_force=f, base_speed=v, base_height=h,
                           end_heights=np.zeros((n, 2)), joint_force=np.zeros(n))


def vertical_force_experiment(policy, cfg, per_hand_force, duration=None,
                              mode="follower", seed=0):
    """Constant vertical force on both hand points; records base height."""
    duration = cfg.evaluation.lift_duration_s if duration is None else duration
    ecfg = _experiment_cfg(cfg, duration)
    env = VecEnv(ecfg, num_envs=1, stage="wbc", mode=mode, seed=seed)
    obs, priv = env.reset()
    steps = int(round(duration / env.policy_dt))
    rows = []
    for k in range(steps):
        hand_forces = np.zeros((1, 2, 3))
        hand_forces[0, :, 2] = per_hand_force
        act = policy.act(obs, priv)
        obs, priv, _, dones, info = env.step(act, extra_hand_forces=hand_forces)
        rows.append((env.policy_dt * (k + 1), per_hand_force,
                     float(info.base_speed[0]), float(info.base_height[0])))
    t, f, v, h = map(np.array, zip(*rows))
    n = len(rows)
    return ExperimentTrace(t=t, applied_force=f, base_speed=v, base_height=h,
                           end_heights=np.zeros((n, 2)), joint_force=np.zeros(n))


NO_FOLLOW = None


def compliance_threshold(trace, v_move=0.05, smooth_window_s=0.25, hold_s=0.5):
    """Smallest applied force at which the smoothed speed first exceeds v_move
    and stays above it for at least hold_s. Returns None if never crossed."""
    if len(trace.t) < 2:
        return NO_FOLLOW
    dt = float(trace.t[1] - trace.t[0])
    w = max(1, int(round(smooth_window_s / dt)))
    kernel = np.ones(w) / w
    padded = np.concatenate([np.full(w - 1, trace.base_speed[0]), trace.base_speed])
    smoothed = np.convolve(padded, kernel, mode="valid")
    hold = max(1, int(round(hold_s / dt)))
    above = smoothed >= v_move
    run = 0
    for i, flag in enumerate(above):
        run = run + 1 if flag else 0
        if run >= hold:
            start = i - hold + 1
            return float(trace.applied_force[start])
    return NO_FOLLOW


def emit_report(reports, path, fmt="csv"):
    """Write a comparison table, one row per policy, stable column order."""
    if not reports:
        raise ValueError("emit_report needs at least one report")
    if fmt == "csv":
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
            w.writeheader()
            for r in reports:
                w.writerow(r.row())
    elif fmt == "json":
        with open(path, "w") as f:
            json.dump([asdict(r) for r in reports], f, indent=2)
            f.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def metrics_from_log(path, episode=0):
    """Replay oracle: recompute the four metrics from an ndjson episode log."""
    acc = {}
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["episode"] != episode:
                continue
            e = acc.setdefault(rec["env"], {"lin": 0.0, "ang": 0.0, "h": 0.0,
                                            "ef": 0.0, "n": 0, "reason": "running"})
            verr = np.array(rec["obj_vel"][:2]) - np.array(rec["v_applied"])
            e["lin"] += float(np.linalg.norm(verr))
            e["ang"] += abs(rec["obj_yaw_rate"] - rec["ang_goal"])
            e["h"] += abs(rec["end_heights"][0] - rec["end_heights"][1])
            e["ef"] += rec["joint_force_h"]
            e["n"] += 1
            if rec["termination"] != "running":
                e["reason"] = rec["termination"]
    envs = [e for e in acc.values() if e["reason"] != "diverged"]
    n = max(1, len(envs))
    return {
        "lin_vel_err": sum(e["lin"] / e["n"] for e in envs) / n,
        "ang_vel_err": sum(e["ang"] / e["n"] for e in envs) / n,
        "height_err": sum(e["h"] / e["n"] for e in envs) / n,
        "avg_ef": sum(e["ef"] / e["n"] for e in envs) / n,
    }
