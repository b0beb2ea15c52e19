import numpy as np

from cocarry import quat
from cocarry.batch_dynamics import BatchModel, BatchWorld, batch_step
from cocarry.dynamics import (
    BodyState6D, CarrierState, CompliantJoint6D, ExternalInputs, GraspCoupling,
    ObjectSpec, SimParams, WorldState, step, NQ,
)


def random_world(rng, params):
    q = rng.uniform(-0.1, 0.1, NQ)
    q[3] = rng.uniform(0.5, 0.9)
    qd = rng.uniform(-0.2, 0.2, NQ)
    c = CarrierState(q=q, qd=qd)
    spec = params.object_spec
    obj = BodyState6D(
        position=np.array([q[0] + 0.85, q[1], q[3] - 0.1]) + rng.uniform(-0.02, 0.02, 3),
        orientation=quat.exp_map(rng.uniform(-0.1, 0.1, 3)),
        lin_vel=rng.uniform(-0.2, 0.2, 3),
        ang_vel=rng.uniform(-0.3, 0.3, 3),
        mass=spec.mass, inertia_diag=spec.inertia_diag())
    sup = BodyState6D(
        position=obj.position + np.array([0.5, 0.0, 0.0]) + rng.uniform(-0.02, 0.02, 3),
        orientation=quat.from_yaw(rng.uniform(-0.2, 0.2)),
        lin_vel=np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)]),
        ang_vel=np.array([0.0, 0.0, rng.uniform(-0.3, 0.3)]),
        mass=20.0, inertia_diag=np.ones(3))
    return WorldState(carrier=c, object=obj, support=sup)


def to_batch(worlds):
    B = len(worlds)
    bw = BatchWorld.zeros(B)
    for i, w in enumerate(worlds):
        bw.q[i] = w.carrier.q
        bw.qd[i] = w.carrier.qd
        bw.obj_pos[i] = w.object.position
        bw.obj_quat[i] = w.object.orientation
        bw.obj_vel[i] = w.object.lin_vel
        bw.obj_ang[i] = w.object.ang_vel
        bw.sup_pos[i] = w.support.position
        bw.sup_quat[i] = w.support.orientation
        bw.sup_vel[i] = w.support.lin_vel
        bw.sup_ang[i] = w.support.ang_vel
        bw.time[i] = w.time
    return bw


def test_batch_matches_single_world():
    rng = np.random.default_rng(7)
    params = SimParams(grasp=GraspCoupling(), object_spec=ObjectSpec(),
                       joint=CompliantJoint6D(anchor_support=np.array([0.05, 0.02, -0.03])))
    model = BatchModel(params=params, object_inertia=ObjectSpec().inertia_diag())
    B = 8
    worlds = [random_world(rng, params) for _ in range(B)]
    targets = np.stack([w.carrier.q + rng.uniform(-0.05, 0.05, NQ) for w in worlds])
    hand_forces = rng.uniform(-5, 5, (B, 2, 3))
    sup_fz = rng.uniform(-50, 250, B)
    sup_tz = rng.uniform(-5, 5, B)

    bw = to_batch(worlds)
    for _ in range(50):
        bw, rec = batch_step(model, bw, targets, hand_forces, sup_fz, sup_tz, dt=0.005)
        for i in range(B):
            ext = ExternalInputs(hand_forces=hand_forces[i],
                                 support_force_z=sup_fz[i], support_torque_z=sup_tz[i])
            worlds[i] = step(params, worlds[i], targets[i], ext, dt=0.005)
        for i in range(B):
            w = worlds[i]
            assert np.allclose(bw.q[i], w.carrier.q, atol=1e-11), f"q mismatch env {i}"
            assert np.allclose(bw.qd[i], w.carrier.qd, atol=1e-10)
            assert np.allclose(bw.obj_pos[i], w.object.position, atol=1e-11)
            assert np.allclose(bw.obj_quat[i], w.object.orientation, atol=1e-11)
            assert np.allclose(bw.obj_vel[i], w.object.lin_vel, atol=1e-10)
            assert np.allclose(bw.obj_ang[i], w.object.ang_vel, atol=1e-10)
            assert np.allclose(bw.sup_pos[i], w.support.position, atol=1e-11)
            assert np.allclose(bw.sup_quat[i], w.support.orientation, atol=1e-11)
            assert np.allclose(rec.joint_force[i], w.forces.joint_force, atol=1e-9)
            assert np.allclose(rec.grasp_stretch[i], w.forces.grasp_stretch, atol=1e-11)


def test_batch_step_deterministic():
    rng = np.random.default_rng(11)
    params = SimParams(grasp=GraspCoupling(), object_spec=ObjectSpec(), joint=CompliantJoint6D())
    model = BatchModel(params=params, object_inertia=ObjectSpec().inertia_diag())
    worlds = [random_world(rng, params) for _ in range(4)]
    bw = to_batch(worlds)
    targets = bw.q.copy()
    a, _ = batch_step(model, bw.copy(), targets, dt=0.005)
    b, _ = batch_step(model, bw.copy(), targets, dt=0.005)
    for f in ('q', 'qd', 'obj_pos', 'obj_quat', 'obj_vel', 'obj_ang', 'sup_pos', 'sup_quat'):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_batch_no_object_mode():
    params = SimParams()
    model = BatchModel(params=params, has_object=False)
    bw = BatchWorld.zeros(3, has_object=False)
    bw.q[:, 3] = 0.7
    out, rec = batch_step(model, bw, bw.q.copy(), dt=0.005)
    assert np.all(np.isfinite(out.q))
    assert np.all(rec.joint_force == 0.0)
