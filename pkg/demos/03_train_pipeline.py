"""The three training stages end to end, at a toy budget.

Real desk-scale budgets live in the run configuration (stage1_env_steps,
stage2_env_steps); this script uses a few PPO iterations per stage so it
finishes in about a minute while exercising every moving part:

  1. whole-body controller (goal tracking under hand perturbations)
  2. privileged residual teacher in the closed-loop carrying environment
  3. proprioception-only student distilled with on-environment cloning

Run:  python3 demos/03_train_pipeline.py
"""

import numpy as np

from cocarry.config import RunConfig
from cocarry.evaluation import evaluate
from cocarry.pipeline import distill_student, train_teacher, train_wbc
from cocarry.policies import StudentPolicy, TeacherComposite, WbcPolicy

cfg = RunConfig()
cfg.run.hidden = [64, 64]
cfg.distill.rounds = 3
cfg.distill.steps_per_round = 24
cfg.distill.bc_epochs = 8

steps = cfg.ppo.horizon * cfg.ppo.num_envs
print("stage 1: whole-body controller ...")
wbc = train_wbc(cfg, seed=7, budget=steps * 20)
print(f"  {wbc.train_steps} env steps, {len(wbc.arrays)} parameter arrays")

print("stage 2: residual teacher (follower mode) ...")
teacher = train_teacher(cfg, wbc, mode="follower", seed=8, budget=steps * 20)
frozen = all(np.array_equal(teacher.arrays[f"base.{k}"], v)
             for k, v in wbc.arrays.items())
print(f"  base weights bitwise frozen: {frozen}")

print("stage 3: student distillation ...")
student = distill_student(cfg, teacher, seed=9)
print(f"  held-out action MSE: {student.extra['holdout_mse']:.2e}")

print("\npaired-seed comparison (4 episodes each, toy-budget policies):")
for name, pol in (("wbc", WbcPolicy.from_checkpoint(wbc)),
                  ("teacher", TeacherComposite.from_checkpoint(teacher)),
                  ("student", StudentPolicy.from_checkpoint(student))):
    r = evaluate(pol, cfg, n_episodes=4, seed=100, mode="follower", policy_id=name)
    print(f"  {name:8s} lin_vel_err={r.lin_vel_err:.3f} m/s  avg_ef={r.avg_ef:6.2f} N  "
          f"height_err={r.height_err:.3f} m")
print("\n(use the cocarry CLI with default budgets for a policy that actually helps)")
