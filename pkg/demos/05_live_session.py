"""Drive a live session programmatically: scripted 'human' inputs, no sockets.

The same Session object backs the websocket server; here we tick it directly
and watch the policy react to a scripted push-forward input. With a trained
follower checkpoint the robot visibly gives to the human's motion.

Run:  python3 demos/05_live_session.py [checkpoint]
"""

import json
import sys

import numpy as np

from cocarry.checkpoint import load_checkpoint
from cocarry.config import RunConfig
from cocarry.learn import RunningNorm, init_mlp
from cocarry.policies import StudentPolicy, load_policy
from cocarry.serve import Session, SessionConfig

cfg = RunConfig()
if len(sys.argv) > 1:
    policy = load_policy(load_checkpoint(sys.argv[1]))
    cfg.run.history = policy.history_len
else:
    cfg.run.history = 5
    obs_dim = 43 * 5 + 12
    policy = StudentPolicy(norm=RunningNorm.for_dim(obs_dim),
                           net=init_mlp(np.random.default_rng(0), [obs_dim, 32, 12],
                                        scale_last=0.0),
                           history_len=5, goal_tile=1)
    print("(no checkpoint given: using an inert stub policy)")

session = Session(cfg, policy, SessionConfig(mode="follower"))

script = [(1.0, {"vx": 0.0}), (4.0, {"vx": 1.0}), (8.0, {"vx": 0.0})]
print("scripted human: idle 1 s, push forward 3 s, release\n")
print("  t[s]  v_applied  base_speed  joint_force  lin_err(2s)")
k = 0
for step in range(int(9.0 / session.env.policy_dt)):
    t = step * session.env.policy_dt
    while k < len(script) and t >= script[k][0] - 1.0:
        msg = {"type": "input", "vx": 0.0, "vy": 0.0, "wz": 0.0, "dh": 0.0}
        msg.update(script[k][1])
        session.inbox.append(msg)
        k += 1
    session.tick()
    if step % 25 == 0:
        frame = json.loads(session.encode_state_frame())
        va = np.hypot(*session.env.v_applied[0])
        q = session.env.world.qd[0]
        print(f"  {t:4.1f}  {va:9.2f}  {np.hypot(q[0], q[1]):10.2f}  "
              f"{frame['forces']['joint']:11.1f}  {frame['metrics']['lin_vel_err']:8.3f}")

print("\nfor the real thing:  cocarry serve --checkpoint <student.ckpt> --port 8800")
print("then open frontend/index.html (after `npm run build` in frontend/)")
