"""The closed-loop carrying environment, seen through a passive robot.

The support body (the simulated human) walks away with its end of the object
while the robot does nothing; watch the interaction force climb as the robot
is literally dragged along, and what that does to the reward terms.

Run:  python3 demos/02_closed_loop_env.py
"""

import numpy as np

from cocarry.config import RunConfig
from cocarry.env import VecEnv

cfg = RunConfig()
env = VecEnv(cfg, num_envs=1, stage="collab", mode="follower", seed=4)
obs, priv = env.reset()

print(f"observation dim {obs.shape[1]} (43 x history {env.history_len} + 12 goal slots)")
print(f"privileged dim  {priv.shape[1]} (13 x history)\n")
print(" t[s]  |v_applied|  obj speed  joint force  height diff   reward")

hold = np.zeros((1, 12))
for k in range(250):
    obs, priv, r, done, info = env.step(hold)
    if k % 25 == 0:
        va = np.linalg.norm(info.v_applied[0])
        ov = np.linalg.norm(info.obj_vel[0, :2])
        hd = abs(info.end_heights[0, 0] - info.end_heights[0, 1])
        print(f"{k*env.policy_dt:5.1f}  {va:10.2f}  {ov:9.2f}  {info.joint_force_h[0]:11.1f}"
              f"  {hd:11.3f}  {r[0]:7.2f}")
    if done[0]:
        print(f"episode ended at t={k*env.policy_dt:.1f} s: "
              f"{ {1: 'timeout', 2: 'fell', 3: 'object dropped', 4: 'diverged'}[info.termination[0]] }")
        break

print("\nreward terms at the last step:")
for name, val in info.reward_terms.items():
    print(f"  {name:24s} {val[0]:+8.3f}  (weight {env.weights[name]})")
