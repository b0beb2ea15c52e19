"""Force-ramp and vertical-force probes on a carrier without the object.

Pass a trained checkpoint to see a policy's compliance signature; without one
the script uses a hold-still stub, which shows the passive plant response.

Run:  python3 demos/04_compliance_experiments.py [checkpoint]
"""

import sys

import numpy as np

from cocarry.checkpoint import load_checkpoint
from cocarry.config import RunConfig
from cocarry.evaluation import (compliance_threshold, force_ramp_experiment,
                                vertical_force_experiment)
from cocarry.policies import load_policy


class HoldStill:
    def act(self, obs, priv=None):
        return np.zeros((obs.shape[0], 12))


cfg = RunConfig()
if len(sys.argv) > 1:
    policy = load_policy(load_checkpoint(sys.argv[1]))
    name = sys.argv[1]
else:
    policy = HoldStill()
    name = "hold-still stub"
print(f"policy: {name}\n")

trace = force_ramp_experiment(policy, cfg, f_max=40.0, duration=10.0, mode="follower")
thr = compliance_threshold(trace, v_move=0.05, smooth_window_s=0.25)
print("force ramp, 0 -> 40 N per hand over 10 s:")
for k in range(0, len(trace.t), len(trace.t) // 10):
    bar = "#" * int(trace.base_speed[k] * 40)
    print(f"  t={trace.t[k]:5.1f}s  F={trace.applied_force[k]:5.1f} N  "
          f"v={trace.base_speed[k]:6.3f} m/s {bar}")
print(f"  compliance threshold: "
      f"{'no-follow' if thr is None else f'{thr:.1f} N'}\n")

print("vertical force on both palms, steady-state height offset:")
for f in (10.0, 20.0):
    tr = vertical_force_experiment(policy, cfg, per_hand_force=f, duration=8.0,
                                   mode="follower")
    half = len(tr.t) // 2
    off = float(np.mean(tr.base_height[half:])) - cfg.physics.nominal_leg
    print(f"  {f:4.0f} N -> {off:+.4f} m")
