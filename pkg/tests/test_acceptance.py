"""Acceptance gate: one test per criterion, one printed pass/fail line each.

Training-dependent criteria share one set of desk-scale artifacts built once
per session (a few minutes of CPU): stage-1 controller, follower-mode
privileged teacher, distilled student, plus paired-seed evaluations.
"""

import asyncio
import json
import time

import numpy as np
import pytest

from _helpers import train_toy_ppo
from cocarry import quat
from cocarry.batch_dynamics import BatchModel, BatchWorld, batch_step
from cocarry.checkpoint import load_checkpoint, save_checkpoint
from cocarry.commands import CommandRanges, sample_goal_command, update_support_targets
from cocarry.config import RunConfig
from cocarry.dynamics import (BodyState6D, CarrierState, GraspCoupling, ObjectSpec,
                              PDGains, SimParams, WorldState, step, NQ,
                              mechanical_energy, hand_world_position)
from cocarry.env import VecEnv
from cocarry.evaluation import (compliance_threshold, emit_report, evaluate,
                                force_ramp_experiment, vertical_force_experiment)
from cocarry.learn import backward, finite_difference_grads, forward, init_mlp
from cocarry.pipeline import distill_student, train_teacher, train_wbc
from cocarry.policies import StudentPolicy, TeacherComposite, WbcPolicy
from cocarry.rewards import batch_task_terms, default_weights


def report(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


STAGE1_ITERS = 600
STAGE2_ITERS = 450
EVAL_EPISODES = 50
EVAL_SEED = 9000


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Train the desk-scale pipeline once and evaluate it on paired seeds."""
    out = tmp_path_factory.mktemp("artifacts")
    cfg = RunConfig()
    steps_per_iter = cfg.ppo.horizon * cfg.ppo.num_envs
    t0 = time.time()
    wbc = train_wbc(cfg, seed=11, budget=steps_per_iter * STAGE1_ITERS,
                    out=out / "wbc.ckpt")
    teacher = train_teacher(cfg, wbc, mode="follower", seed=12,
                            budget=steps_per_iter * STAGE2_ITERS,
                            out=out / "teacher_f.ckpt")
    student = distill_student(cfg, teacher, seed=13, out=out / "student_f.ckpt")
    wp = WbcPolicy.from_checkpoint(wbc)
    tp = TeacherComposite.from_checkpoint(teacher)
    sp = StudentPolicy.from_checkpoint(student)
    reports = {}
    for name, pol in (("wbc", wp), ("teacher", tp), ("student", sp)):
        reports[name] = evaluate(pol, cfg, n_episodes=EVAL_EPISODES, seed=EVAL_SEED,
                                 mode="follower", policy_id=name)
    print(f"\n[artifacts] trained+evaluated in {time.time() - t0:.0f}s; "
          + "; ".join(f"{n}: lin={r.lin_vel_err:.4f} ef={r.avg_ef:.2f}"
                      for n, r in reports.items()))
    return {"cfg": cfg, "dir": out, "wbc": wbc, "teacher": teacher,
            "student": student, "wbc_pol": wp, "teacher_pol": tp,
            "student_pol": sp, "reports": reports}


# ------------------------------------------------------------------ 1

def test_reward_conformance():
    w = default_weights(RunConfig().rewards, "collab")
    weights_ok = (w["lin_vel_tracking"], w["yaw_vel_tracking"], w["z_vel_penalty"],
                  w["height_diff_penalty"], w["force_penalty"]) == (1.0, 1.0, 0.05, 10.0, 0.002)
    terms0 = batch_task_terms(np.zeros((1, 3)), np.zeros(1), np.zeros((1, 2)),
                              np.zeros((1, 3)), np.zeros((1, 2)), np.zeros(1))
    phi0 = terms0["lin_vel_tracking"][0]
    terms1 = batch_task_terms(np.array([[1.0, 0, 0]]), np.zeros(1), np.zeros((1, 2)),
                              np.zeros((1, 3)), np.zeros((1, 2)), np.zeros(1))
    phi1 = terms1["lin_vel_tracking"][0]
    ok = weights_ok and phi0 == 1.0 and abs(phi1 - np.exp(-1.0)) < 1e-12
    report("reward conformance", ok,
           f"phi(0)={phi0}, phi(1)={phi1:.12f} vs e^-1, weights table-exact={weights_ok}")


# ------------------------------------------------------------------ 2

def test_command_conformance():
    rng = np.random.default_rng(0)
    ranges = CommandRanges()
    nominal = np.array([[0.4, 0.2, -0.1], [0.4, -0.2, -0.1]])
    n = 100_000
    bad = 0
    for _ in range(n // 10):
        g = sample_goal_command(rng, ranges, nominal)
        st = update_support_targets(rng, g, ranges, noise_sigma=0.1)
        checks = [
            -0.8 <= g.v_lin[0] <= 1.2, -0.5 <= g.v_lin[1] <= 0.5,
            -1.2 <= g.v_ang <= 1.2, 0.45 <= g.h_root <= 0.9,
            np.all(np.abs(g.ee_pos - nominal) <= 0.075 + 1e-12),
            np.all(np.abs(g.ee_yaw) <= np.pi / 6 + 1e-12),
            -0.8 <= st.ang_goal <= 0.8, 0.5 <= st.height_target <= 0.85,
            np.linalg.norm(st.v_applied) <= np.linalg.norm(g.v_lin) + 0.3 + 1e-9,
        ]
        bad += sum(9 for c in [all(checks)] if not c)
    deg = CommandRanges(lin_vel_x=(0.3, 0.3), lin_vel_y=(0.0, 0.0),
                        ang_vel=(-0.2, -0.2), height=(0.6, 0.6),
                        ee_cube_side=0.0, ee_cone_half_angle=0.0)
    g = sample_goal_command(rng, deg, nominal)
    degenerate_ok = (g.v_lin[0] == 0.3 and g.v_lin[1] == 0.0 and g.v_ang == -0.2
                     and g.h_root == 0.6 and np.array_equal(g.ee_pos, nominal))
    ok = bad == 0 and degenerate_ok
    report("command conformance", ok,
           f"{n} sampled values in range ({bad} violations), degenerate exact={degenerate_ok}")


# ------------------------------------------------------------------ 3

def test_gradient_correctness():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        sizes = [int(rng.integers(2, 9)), int(rng.integers(2, 17)), int(rng.integers(2, 9))]
        net = init_mlp(rng, sizes)
        x = rng.normal(size=(3, sizes[0]))
        c = rng.normal(size=(3, sizes[-1]))
        _, cache = forward(net, x)
        analytic, _ = backward(net, cache, c)
        fd = finite_difference_grads(net, x, lambda y: float(np.sum(c * y)), h=1e-5)
        for ga, gf in zip(analytic, fd):
            na = np.linalg.norm(ga - gf)
            nb = max(np.linalg.norm(ga), np.linalg.norm(gf), 1e-12)
            worst = max(worst, na / nb)
    ok = worst < 1e-4
    report("gradient correctness", ok,
           f"max relative error vs central differences over 20 nets: {worst:.2e}")


# ------------------------------------------------------------------ 4

def test_physics_sanity():
    # force-free momentum
    params = SimParams(gravity=0.0)
    c = CarrierState(q=np.zeros(NQ), qd=np.zeros(NQ))
    c.q[3] = 0.7
    obj = BodyState6D(np.zeros(3), quat.IDENTITY.copy(),
                      np.array([0.3, -0.2, 0.1]), np.array([0.5, -0.4, 0.8]),
                      5.0, ObjectSpec().inertia_diag())
    world = WorldState(carrier=c, object=obj)
    p0 = obj.mass * obj.lin_vel.copy()
    R = quat.to_matrix(obj.orientation)
    L_prev = R @ (obj.inertia_diag * (R.T @ obj.ang_vel))
    max_p = 0.0
    max_l = 0.0
    for _ in range(1000):
        world = step(params, world, c.q, dt=0.005)
        o = world.object
        R = quat.to_matrix(o.orientation)
        L = R @ (o.inertia_diag * (R.T @ o.ang_vel))
        max_p = max(max_p, float(np.linalg.norm(o.mass * o.lin_vel - p0)))
        max_l = max(max_l, float(np.linalg.norm(L - L_prev)))
        L_prev = L
    # free fall
    params2 = SimParams()
    obj2 = BodyState6D(np.array([0.0, 0.0, 10.0]), quat.IDENTITY.copy(),
                       np.zeros(3), np.zeros(3), 2.0, np.ones(3))
    world2 = WorldState(carrier=c.copy(), object=obj2)
    for _ in range(100):
        world2 = step(params2, world2, c.q, dt=0.005)
    vz_err = abs(world2.object.lin_vel[2] + 4.905)
    # damped spring dissipation
    params3 = SimParams(gravity=0.0, grasp=GraspCoupling(), object_spec=ObjectSpec(),
                        gains=PDGains(kp=np.zeros(NQ), kd=np.zeros(NQ)))
    c3 = CarrierState(q=np.zeros(NQ), qd=np.zeros(NQ))
    c3.q[3] = 0.7
    spec = params3.object_spec
    h0 = hand_world_position(params3, c3, 0)
    h1 = hand_world_position(params3, c3, 1)
    obj3 = BodyState6D(0.5 * (h0 + h1) - 0.5 * (spec.robot_grasp_offsets[0]
                                                + spec.robot_grasp_offsets[1]),
                       quat.IDENTITY.copy(), np.array([0.0, 0.1, 0.0]), np.zeros(3),
                       spec.mass, spec.inertia_diag())
    obj3.position[0] -= 0.05
    world3 = WorldState(carrier=c3, object=obj3)
    prev = mechanical_energy(params3, world3)
    monotone = True
    for _ in range(1000):
        world3 = step(params3, world3, c3.q, dt=0.005)
        e = mechanical_energy(params3, world3)
        if e > prev * (1 + 1e-9) + 1e-12:
            monotone = False
        prev = e
    ok = max_p < 1e-9 and max_l < 1e-6 and vz_err < 1e-3 and monotone
    report("physics sanity", ok,
           f"momentum drift {max_p:.1e}/{max_l:.1e}, free-fall err {vz_err:.1e}, "
           f"damped energy nonincreasing={monotone}")


# ------------------------------------------------------------------ 5

def test_ppo_sanity():
    rewards = train_toy_ppo(updates=200, num_envs=16, seed=0)
    first = float(np.mean(rewards[:5]))
    last = float(np.mean(rewards[-10:]))
    ok = last >= 1.5 * first
    report("PPO sanity", ok,
           f"toy tracking reward {first:.3f} -> {last:.3f} "
           f"({(last / first - 1) * 100:+.0f}%, need >= +50%) within 200 updates")


# ------------------------------------------------------------------ 6

def test_stage2_directional_claim(artifacts):
    rw = artifacts["reports"]["wbc"]
    rt = artifacts["reports"]["teacher"]
    ef_red = 1.0 - rt.avg_ef / rw.avg_ef
    lin_red = 1.0 - rt.lin_vel_err / rw.lin_vel_err
    ok = ef_red >= 0.15 and lin_red >= 0.30
    report("stage-2 directional claim", ok,
           f"teacher vs frozen WBC on {rw.episodes} paired episodes: "
           f"avg EF {rw.avg_ef:.2f}->{rt.avg_ef:.2f} N ({ef_red * 100:+.1f}%, need >=15%), "
           f"lin vel err {rw.lin_vel_err:.4f}->{rt.lin_vel_err:.4f} "
           f"({lin_red * 100:+.1f}%, need >=30%)")


# ------------------------------------------------------------------ 7

def test_distillation_fidelity(artifacts):
    cfg = artifacts["cfg"]
    # degenerate teacher: zero residual on the trained base
    wbc = artifacts["wbc"]
    base = WbcPolicy.from_checkpoint(wbc)
    rng = np.random.default_rng(5)
    from cocarry.policies import feature_dim
    in_dim = feature_dim(43 * cfg.run.history + 12, base.goal_tile) + 13 * cfg.run.history
    degenerate = TeacherComposite(
        base=base,
        residual=init_mlp(rng, [in_dim] + list(cfg.run.hidden) + [12], zero_last=True),
        res_log_std=np.zeros(12),
        res_critic=init_mlp(rng, [in_dim] + list(cfg.run.hidden) + [1]),
        residual_scale=cfg.run.residual_scale,
        history_len=cfg.run.history, mode="follower",
        base_arrays_f32=dict(wbc.arrays))
    deg_ck = degenerate.to_checkpoint(seed=1)
    deg_student = distill_student(cfg, deg_ck, seed=21, rounds=5)
    deg_mse = deg_student.extra["holdout_mse"]

    rt = artifacts["reports"]["teacher"]
    rs = artifacts["reports"]["student"]
    rel = abs(rs.lin_vel_err - rt.lin_vel_err) / rt.lin_vel_err
    ok = deg_mse < 1e-3 and rel <= 0.20
    report("distillation fidelity", ok,
           f"degenerate-teacher held-out MSE {deg_mse:.2e} (need <1e-3); "
           f"student lin err {rs.lin_vel_err:.4f} within {rel * 100:.1f}% of "
           f"teacher {rt.lin_vel_err:.4f} (need <=20%)")


# ------------------------------------------------------------------ 8

def test_follower_behavior(artifacts):
    rw = artifacts["reports"]["wbc"]
    rs = artifacts["reports"]["student"]
    ok = rs.lin_vel_err <= 0.5 * rw.lin_vel_err
    report("follower behavior", ok,
           f"zero-goal student lin err {rs.lin_vel_err:.4f} vs frozen WBC "
           f"{rw.lin_vel_err:.4f} (need <= 50% = {0.5 * rw.lin_vel_err:.4f})")


# ------------------------------------------------------------------ 9

def test_history_ablation_machinery(artifacts, tmp_path):
    cfg = RunConfig()
    steps = cfg.ppo.horizon * cfg.ppo.num_envs * 2
    reports = []
    for l in (10, 25, 50):
        c = RunConfig()
        c.run.history = l
        wbc = train_wbc(c, seed=31, budget=steps)
        teacher = train_teacher(c, wbc, mode="follower", seed=32, budget=steps)
        pol = TeacherComposite.from_checkpoint(teacher)
        rep = evaluate(pol, c, n_episodes=2, seed=77, mode="follower",
                       policy_id=f"history-{l}")
        reports.append(rep)
    path = tmp_path / "history.csv"
    emit_report(reports, path, fmt="csv")
    rows = path.read_text().strip().split("\n")
    ok = len(rows) == 4 and all(f"history-{l}" in path.read_text() for l in (10, 25, 50))
    report("history ablation machinery", ok,
           f"runs completed for history 10/25/50; report rows={len(rows) - 1}")


# ------------------------------------------------------------------ 10

def test_compliance_threshold_property(artifacts):
    cfg = artifacts["cfg"]
    wbc_pol = artifacts["wbc_pol"]
    stu_pol = artifacts["student_pol"]
    tr_wbc = force_ramp_experiment(wbc_pol, cfg, mode="follower")
    tr_stu = force_ramp_experiment(stu_pol, cfg, mode="follower")
    thr_wbc = compliance_threshold(tr_wbc, v_move=cfg.evaluation.move_speed_threshold,
                                   smooth_window_s=cfg.evaluation.smoothing_window_s)
    thr_stu = compliance_threshold(tr_stu, v_move=cfg.evaluation.move_speed_threshold,
                                   smooth_window_s=cfg.evaluation.smoothing_window_s)
    offsets = {}
    for name, pol in (("wbc", wbc_pol), ("student", stu_pol)):
        offs = []
        for f in cfg.evaluation.lift_forces:
            tr = vertical_force_experiment(pol, cfg, per_hand_force=f, mode="follower")
            half = len(tr.t) // 2
            offs.append(float(np.mean(tr.base_height[half:])) - cfg.physics.nominal_leg)
        offsets[name] = offs
    s10, s20 = offsets["student"]
    monotone = abs(s20) > abs(s10)
    ok = (thr_wbc is None) and (thr_stu is not None) and monotone
    report("compliance threshold property", ok,
           f"frozen WBC: {'no-follow' if thr_wbc is None else f'{thr_wbc:.1f} N'} "
           f"(need no-follow); student: "
           f"{'no-follow' if thr_stu is None else f'{thr_stu:.1f} N'} (need finite); "
           f"vertical offsets student 10N {s10:+.3f} / 20N {s20:+.3f} m, "
           f"|20N|>|10N|={monotone} (WBC held {offsets['wbc'][0]:+.3f}/{offsets['wbc'][1]:+.3f})")


# ------------------------------------------------------------------ 11

def test_determinism(artifacts, tmp_path):
    cfg = RunConfig()
    budget = cfg.ppo.horizon * cfg.ppo.num_envs * 3
    a = train_wbc(cfg, seed=55, budget=budget)
    b = train_wbc(cfg, seed=55, budget=budget)
    ckpt_equal = list(a.arrays) == list(b.arrays) and all(
        np.array_equal(a.arrays[k], b.arrays[k]) for k in a.arrays)

    # bitwise-identical first 1000 rollout steps under the trained policy
    pol = WbcPolicy.from_checkpoint(artifacts["wbc"])
    traces = []
    for _ in range(2):
        env = VecEnv(cfg, num_envs=2, stage="collab", mode="follower", seed=99)
        obs, priv = env.reset()
        teacher = artifacts["teacher_pol"]
        h = 0.0
        chunks = []
        for t in range(500):
            act = teacher.act(obs, priv)
            obs, priv, r, d, info = env.step(act)
            chunks.append(obs.copy())
        traces.append(np.concatenate(chunks))
    rollout_equal = np.array_equal(traces[0], traces[1])
    ok = ckpt_equal and rollout_equal
    report("determinism", ok,
           f"checkpoints bitwise equal={ckpt_equal}, "
           f"1000 rollout steps bitwise equal={rollout_equal}")


# ------------------------------------------------- SECONDARY: console

def test_secondary_console_round_trip():
    from cocarry.learn import RunningNorm
    from cocarry.serve import Session, SessionConfig, serve_forever

    cfg = RunConfig()
    cfg.run.history = 5
    obs_dim = 43 * 5 + 12
    pol = StudentPolicy(norm=RunningNorm.for_dim(obs_dim),
                        net=init_mlp(np.random.default_rng(0), [obs_dim, 16, 12],
                                     scale_last=0.0),
                        history_len=5, goal_tile=1)

    # zero-input invariance: a connected idle client must not perturb the sim
    s_a = Session(cfg, pol, SessionConfig())
    s_b = Session(cfg, pol, SessionConfig())
    for k in range(50):
        s_b.inbox.append({"type": "input", "vx": 0.0, "vy": 0.0, "wz": 0.0, "dh": 0.0})
        s_a.tick()
        s_b.tick()
    invariant = np.array_equal(s_a.env.world.q, s_b.env.world.q)

    async def scenario():
        import websockets
        session = Session(cfg, pol, SessionConfig())
        ready = asyncio.Event()
        stop = asyncio.Event()
        task = asyncio.create_task(serve_forever(session, "127.0.0.1", 0,
                                                 ready_event=ready, stop_event=stop))
        await asyncio.wait_for(ready.wait(), 5)
        best = None
        async with websockets.connect(f"ws://127.0.0.1:{session.bound_port}") as ws:
            await asyncio.wait_for(ws.recv(), 5)
            loop = asyncio.get_event_loop()
            for trial in range(3):
                await ws.send(json.dumps({"type": "reset"}))
                await asyncio.sleep(0.2)
                # drain any stale frames before measuring
                try:
                    while True:
                        await asyncio.wait_for(ws.recv(), 0.01)
                except asyncio.TimeoutError:
                    pass
                t0 = loop.time()
                await ws.send(json.dumps({"type": "input", "vx": 1.0, "vy": 0,
                                          "wz": 0, "dh": 0}))
                while loop.time() - t0 < 2.0:
                    fr = json.loads(await asyncio.wait_for(ws.recv(), 2))
                    if fr.get("type") == "state" and fr["support"]["vel"][0] > 0.0:
                        lat = loop.time() - t0
                        best = lat if best is None else min(best, lat)
                        break
        stop.set()
        try:
            await asyncio.wait_for(task, 5)
        except (asyncio.TimeoutError, asyncio.CancelledError):
            task.cancel()
        return best

    latency = asyncio.run(scenario())
    ok = invariant and latency is not None and latency < 0.1
    report("console round trip (secondary)", ok,
           f"idle-client invariance={invariant}, key->frame latency "
           f"{latency * 1000 if latency else float('nan'):.0f} ms (need <100 ms)")
