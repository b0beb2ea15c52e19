"""Tour of the reduced-order physics: free bodies, PD actuation, couplings.

Run:  python3 demos/01_physics_basics.py
"""

import numpy as np

from cocarry import quat
from cocarry.dynamics import (BodyState6D, CarrierState, CompliantJoint6D,
                              GraspCoupling, ObjectSpec, SimParams, WorldState,
                              mechanical_energy, step, NQ)

# --- a tumbling free body conserves momentum ------------------------------

params = SimParams(gravity=0.0)
carrier = CarrierState(q=np.zeros(NQ), qd=np.zeros(NQ))
carrier.q[3] = 0.7

obj = BodyState6D(position=np.zeros(3), orientation=quat.IDENTITY.copy(),
                  lin_vel=np.array([0.3, -0.2, 0.1]),
                  ang_vel=np.array([0.5, -0.4, 0.8]),
                  mass=5.0, inertia_diag=ObjectSpec().inertia_diag())
world = WorldState(carrier=carrier, object=obj)

R = quat.to_matrix(obj.orientation)
L0 = R @ (obj.inertia_diag * (R.T @ obj.ang_vel))
p0 = obj.mass * obj.lin_vel
for _ in range(1000):
    world = step(params, world, carrier.q, dt=0.005)
o = world.object
R = quat.to_matrix(o.orientation)
L = R @ (o.inertia_diag * (R.T @ o.ang_vel))
print("free body after 5 s of tumbling:")
print(f"  linear momentum drift : {np.linalg.norm(o.mass * o.lin_vel - p0):.2e} kg m/s")
print(f"  angular momentum drift: {np.linalg.norm(L - L0):.2e} kg m^2/s")

# --- free fall matches the closed form ------------------------------------

params = SimParams()
obj = BodyState6D(position=np.array([0.0, 0.0, 10.0]), orientation=quat.IDENTITY.copy(),
                  lin_vel=np.zeros(3), ang_vel=np.zeros(3),
                  mass=2.0, inertia_diag=np.ones(3))
world = WorldState(carrier=carrier.copy(), object=obj)
for _ in range(100):
    world = step(params, world, carrier.q, dt=0.005)
print(f"\nfree fall, 0.5 s: v_z = {world.object.lin_vel[2]:+.4f} m/s (closed form -4.905)")

# --- a damped grasp spring dissipates energy ------------------------------

from cocarry.dynamics import PDGains
params = SimParams(gravity=0.0, grasp=GraspCoupling(), object_spec=ObjectSpec(),
                   gains=PDGains(kp=np.zeros(NQ), kd=np.zeros(NQ)))
c = CarrierState(q=np.zeros(NQ), qd=np.zeros(NQ))
c.q[3] = 0.7
# place the object so the grasp springs are stretched 5 cm
from cocarry.dynamics import hand_world_position
h0 = hand_world_position(params, c, 0)
h1 = hand_world_position(params, c, 1)
spec = params.object_spec
obj = BodyState6D(position=0.5 * (h0 + h1) - 0.5 * (spec.robot_grasp_offsets[0]
                                                    + spec.robot_grasp_offsets[1]),
                  orientation=quat.IDENTITY.copy(), lin_vel=np.zeros(3),
                  ang_vel=np.zeros(3), mass=spec.mass, inertia_diag=spec.inertia_diag())
obj.position[0] -= 0.05
world = WorldState(carrier=c, object=obj)
print("\ndamped grasp spring, energy over time:")
for k in range(6):
    e = mechanical_energy(params, world)
    print(f"  t={world.time:4.2f} s  E={e:8.5f} J")
    for _ in range(40):
        world = step(params, world, c.q, dt=0.005)
