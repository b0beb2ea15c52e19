"""Reduced-order rigid-body simulation of the carrier robot, carried object and support body.

The carrier has 12 generalized DoFs:

    index  coordinate            unit   notes
    0      base_x                m      world frame, PD-position virtual joint
    1      base_y                m      world frame
    2      base_yaw              rad    world frame
    3      leg_height            m      prismatic, equals base z
    4..6   left hand dx,dy,dz    m      offset from nominal grasp pose, base frame
    7      left hand yaw         rad    relative to base
    8..10  right hand dx,dy,dz   m
    11     right hand yaw        rad

Hands are point masses attached to the base through their PD actuators; the
actuation reaction (plus joint-limit spring reaction) is applied back onto the
base, so external loads on the hands surface as joint-target offsets. The
carried object and the support body are full 6-DoF rigid bodies; the support
body is kinematic in horizontal translation (its planar velocity is set by the
caller) and force/torque driven in height and yaw, with roll and pitch locked.

Integration is semi-implicit Euler (velocities first, then positions) with
quaternion updates through the exponential map. Rigid-body rotation advances
angular momentum, not angular velocity, so torque-free motion conserves
momentum to round-off.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import quat

NQ = 12
BASE_X, BASE_Y, BASE_YAW, LEG = 0, 1, 2, 3
LHAND = slice(4, 7)
RHAND = slice(8, 11)
LHAND_YAW, RHAND_YAW = 7, 11
HAND_SLICES = (LHAND, RHAND)
HAND_YAW_IDX = (LHAND_YAW, RHAND_YAW)

_Z = np.array([0.0, 0.0, 1.0])


def _cross(a, b):
    # np.cross has ~50x overhead for single 3-vectors
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def _finite(arr):
    s = float(np.sum(arr))
    return s == s and abs(s) != np.inf


class ValidationError(ValueError):
    """Raised when an input violates a dynamics precondition."""


class SimulationDiverged(RuntimeError):
    """Raised when integration produces a non-finite state."""

    def __init__(self, field_name):
        super().__init__(f"simulation diverged: non-finite {field_name}")
        self.field_name = field_name


@dataclass
class CarrierState:
    """Generalized positions/velocities of the reduced carrier plus its mass data."""

    q: np.ndarray
    qd: np.ndarray
    base_mass: float = 15.0
    base_yaw_inertia: float = 1.5
    hand_point_mass: float = 0.5

    def copy(self):
        return CarrierState(self.q.copy(), self.qd.copy(), self.base_mass,
                            self.base_yaw_inertia, self.hand_point_mass)


@dataclass
class BodyState6D:
    """Free rigid body: world pose and velocity plus mass properties."""

    position: np.ndarray
    orientation: np.ndarray  # unit quaternion, w first
    lin_vel: np.ndarray
    ang_vel: np.ndarray      # world frame
    mass: float
    inertia_diag: np.ndarray  # body frame

    def copy(self):
        return BodyState6D(self.position.copy(), self.orientation.copy(),
                           self.lin_vel.copy(), self.ang_vel.copy(),
                           self.mass, self.inertia_diag.copy())


@dataclass
class ObjectSpec:
    """Geometry of the carried object and where hands / the human attach to it."""

    dims: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.4, 0.3]))
    mass: float = 5.0
    robot_grasp_offsets: np.ndarray = field(
        default_factory=lambda: np.array([[-0.45, 0.2, 0.0], [-0.45, -0.2, 0.0]]))
    human_end_offset: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.0]))
    end_markers: np.ndarray = field(
        default_factory=lambda: np.array([[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]))

    def inertia_diag(self):
        x, y, z = self.dims
        return self.mass / 12.0 * np.array([y * y + z * z, x * x + z * z, x * x + y * y])


@dataclass
class CompliantJoint6D:
    """Spring-damper 6-DoF coupling between support body and object."""

    stiffness: np.ndarray = field(
        default_factory=lambda: np.array([500.0, 500.0, 500.0, 50.0, 50.0, 50.0]))
    damping: np.ndarray = field(
        default_factory=lambda: np.array([10.0, 10.0, 10.0, 0.5, 0.5, 0.5]))
    limit_lower: np.ndarray = field(
        default_factory=lambda: np.array([-0.2, -0.2, -0.2, -0.5, -0.5, -0.5]))
    limit_upper: np.ndarray = field(
        default_factory=lambda: np.array([0.2, 0.2, 0.2, 0.5, 0.5, 0.5]))
    anchor_support: np.ndarray = field(default_factory=lambda: np.zeros(3))
    anchor_object: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.0]))
    limit_stiffness_scale: float = 10.0


@dataclass
class GraspCoupling:
    """Stiff spring-damper standing in for a fixed grasp."""

    stiffness: float = 2000.0
    damping: float = 50.0
    max_stretch: float = 0.3


@dataclass
class PDGains:
    kp: np.ndarray
    kd: np.ndarray


def default_gains():
    kp = np.array([300.0, 300.0, 50.0, 2000.0,
                   1000.0, 1000.0, 1000.0, 5.0,
                   1000.0, 1000.0, 1000.0, 5.0])
    kd = np.array([40.0, 40.0, 8.0, 300.0,
                   40.0, 40.0, 40.0, 0.5,
                   40.0, 40.0, 40.0, 0.5])
    return PDGains(kp=kp, kd=kd)


def default_effort_limit():
    return np.array([500.0, 500.0, 50.0, 800.0,
                     100.0, 100.0, 100.0, 50.0,
                     100.0, 100.0, 100.0, 50.0])


def default_joint_limits():
    inf = np.inf
    lower = np.array([-inf, -inf, -inf, 0.3,
                      -0.5, -0.5, -0.5, -1.57,
                      -0.5, -0.5, -0.5, -1.57])
    upper = np.array([inf, inf, inf, 1.0,
                      0.5, 0.5, 0.5, 1.57,
                      0.5, 0.5, 0.5, 1.57])
    return lower, upper


@dataclass
class SimParams:
    """Everything step() needs besides the state itself."""

    gains: PDGains = field(default_factory=default_gains)
    effort_limit: np.ndarray = field(default_factory=default_effort_limit)
    q_limit_lower: np.ndarray = field(default_factory=lambda: default_joint_limits()[0])
    q_limit_upper: np.ndarray = field(default_factory=lambda: default_joint_limits()[1])
    limit_stiffness_scale: float = 10.0
    nominal_hand_offsets: np.ndarray = field(
        default_factory=lambda: np.array([[0.4, 0.2, -0.1], [0.4, -0.2, -0.1]]))
    hand_yaw_inertia: float = 0.02
    gravity: float = 9.81
    leg_gravity_ff: bool = True
    grasp: GraspCoupling | None = None
    joint: CompliantJoint6D | None = None
    object_spec: ObjectSpec | None = None


@dataclass
class ForceRecord:
    """Per-step force bookkeeping, refreshed by every step()."""

    pd_feedback: np.ndarray = field(default_factory=lambda: np.zeros(NQ))
    grasp_force_obj: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    grasp_stretch: np.ndarray = field(default_factory=lambda: np.zeros(2))
    grasp_broken: bool = False
    joint_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_reaction_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_reaction_torque: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class WorldState:
    carrier: CarrierState
    object: BodyState6D | None = None
    support: BodyState6D | None = None
    time: float = 0.0
    forces: ForceRecord = field(default_factory=ForceRecord)

    def copy(self):
        return WorldState(
            carrier=self.carrier.copy(),
            object=None if self.object is None else self.object.copy(),
            support=None if self.support is None else self.support.copy(),
            time=self.time,
            forces=replace(self.forces),
        )


@dataclass
class ExternalInputs:
    """Forces injected by the environment for one physics step."""

    hand_forces: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    support_force_z: float = 0.0
    support_torque_z: float = 0.0


def rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def hand_world_position(params, carrier, i, R=None):
    q = carrier.q
    if R is None:
        R = rot_z(q[BASE_YAW])
    off = params.nominal_hand_offsets[i] + q[HAND_SLICES[i]]
    base = np.array([q[BASE_X], q[BASE_Y], q[LEG]])
    return base + R @ off


def hand_world_velocity(params, carrier, i, R=None):
    q, qd = carrier.q, carrier.qd
    if R is None:
        R = rot_z(q[BASE_YAW])
    off_world = R @ (params.nominal_hand_offsets[i] + q[HAND_SLICES[i]])
    vbase = np.array([qd[BASE_X], qd[BASE_Y], qd[LEG]])
    wz = qd[BASE_YAW]
    return vbase + np.array([-wz * off_world[1], wz * off_world[0], 0.0]) + R @ qd[HAND_SLICES[i]]


def pd_torque(gains, target, q, qd, effort_limit=None):
    """PD position control law: kp*(target - q) - kd*qd, optionally effort-clamped."""
    target = np.asarray(target, dtype=float)
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if not (_finite(target) and _finite(q) and _finite(qd)):
        raise ValidationError("pd_torque inputs must be finite")
    if target.shape != q.shape or q.shape != qd.shape:
        raise ValidationError("pd_torque layout mismatch")
    tau = gains.kp * (target - q) - gains.kd * qd
    if effort_limit is not None:
        tau = np.clip(tau, -effort_limit, effort_limit)
    return tau


def limit_spring_force(params, q):
    """One-sided penalty spring beyond each finite joint limit (structural, unclamped)."""
    kp = params.gains.kp * params.limit_stiffness_scale
    below = np.minimum(q - params.q_limit_lower, 0.0)
    above = np.maximum(q - params.q_limit_upper, 0.0)
    out = -kp * (below + above)
    return np.where(np.isfinite(out), out, 0.0)


def grasp_forces(coupling, carrier, obj, spec, params):
    """Spring-damper grasp forces between both hands and their grasp points.

    Returns (force_on_object[2,3], stretch[2], base_reaction_force, base_reaction_torque).
    The base reaction is the hand loads reflected about the base origin; the caller
    decides how it enters the dynamics (here, step() routes loads through the hand
    masses instead, so this is a bookkeeping quantity).
    """
    R = rot_z(carrier.q[BASE_YAW])
    Ro = quat.to_matrix(obj.orientation)
    base = np.array([carrier.q[BASE_X], carrier.q[BASE_Y], carrier.q[LEG]])
    forces = np.zeros((2, 3))
    stretch = np.zeros(2)
    react_f = np.zeros(3)
    react_tau = np.zeros(3)
    for i in range(2):
        p_h = hand_world_position(params, carrier, i, R)
        v_h = hand_world_velocity(params, carrier, i, R)
        r_g = Ro @ spec.robot_grasp_offsets[i]
        p_g = obj.position + r_g
        v_g = obj.lin_vel + _cross(obj.ang_vel, r_g)
        delta = p_h - p_g
        f = coupling.stiffness * delta + coupling.damping * (v_h - v_g)
        forces[i] = f
        stretch[i] = np.sqrt(delta @ delta)
        react_f += -f
        react_tau += _cross(p_h - base, -f)
    return forces, stretch, react_f, react_tau


def compliant_joint_wrench(joint, support, obj):
    """Paired wrenches of the 6-DoF spring-damper joint.

    Returns (on_support, on_object): each a (force, torque_about_body_origin) pair,
    plus the raw joint force/torque in world frame for recording. Displacement and
    rate are measured in the support anchor frame; limit violations engage a
    one-sided penalty spring on top of the base stiffness.
    """
    for q_ in (support.orientation, obj.orientation):
        n = np.sqrt(q_ @ q_)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-3:
            raise ValidationError("degenerate quaternion in compliant_joint_wrench")
    Rs = quat.to_matrix(support.orientation)
    Ro = quat.to_matrix(obj.orientation)
    r_s = Rs @ joint.anchor_support
    r_o = Ro @ joint.anchor_object
    a_s = support.position + r_s
    a_o = obj.position + r_o

    d_world = a_o - a_s
    delta_t = Rs.T @ d_world
    q_rel = quat.multiply(quat.conjugate(support.orientation), obj.orientation)
    delta_r = quat.to_rotvec(q_rel)

    v_as = support.lin_vel + _cross(support.ang_vel, r_s)
    v_ao = obj.lin_vel + _cross(obj.ang_vel, r_o)
    rate_t = Rs.T @ (v_ao - v_as - _cross(support.ang_vel, d_world))
    rate_r = Rs.T @ (obj.ang_vel - support.ang_vel)

    delta = np.concatenate([delta_t, delta_r])
    rate = np.concatenate([rate_t, rate_r])
    excess = (np.maximum(delta - joint.limit_upper, 0.0)
              + np.minimum(delta - joint.limit_lower, 0.0))
    load = -(joint.stiffness * (delta + joint.limit_stiffness_scale * excess)
             + joint.damping * rate)

    f_world = Rs @ load[:3]
    tau_world = Rs @ load[3:]
    on_object = (f_world, tau_world + _cross(r_o, f_world))
    on_support = (-f_world, -tau_world + _cross(r_s, -f_world))
    return on_support, on_object, f_world, tau_world


def _body_ang_momentum(body):
    R = quat.to_matrix(body.orientation)
    return R @ (body.inertia_diag * (R.T @ body.ang_vel))


def _advance_rotation(body, torque_world, dt):
    """Momentum-based rotation update; returns (new_quat, new_ang_vel)."""
    R = quat.to_matrix(body.orientation)
    L = R @ (body.inertia_diag * (R.T @ body.ang_vel)) + dt * torque_world
    omega_mid = R @ ((R.T @ L) / body.inertia_diag)
    q_new = quat.integrate(body.orientation, omega_mid, dt)
    R_new = quat.to_matrix(q_new)
    omega_new = R_new @ ((R_new.T @ L) / body.inertia_diag)
    return q_new, omega_new


def step(params, world, targets, ext=None, dt=0.005):
    """Advance the world by one physics step. Pure: the input world is untouched."""
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    if ext is None:
        ext = ExternalInputs()
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (NQ,):
        raise ValidationError("targets must be a 12-vector")
    if not np.all(np.isfinite(targets)):
        raise ValidationError("targets must be finite")

    c = world.carrier
    obj = world.object
    sup = world.support
    g = params.gravity
    q, qd = c.q, c.qd

    targets = np.clip(targets, params.q_limit_lower, params.q_limit_upper)
    tau = pd_torque(params.gains, targets, q, qd, params.effort_limit)
    lim = limit_spring_force(params, q)

    yaw = q[BASE_YAW]
    R = rot_z(yaw)
    base_pos = np.array([q[BASE_X], q[BASE_Y], q[LEG]])
    base_vel = np.array([qd[BASE_X], qd[BASE_Y], qd[LEG]])
    wz = qd[BASE_YAW]

    rec = ForceRecord(pd_feedback=tau.copy())

    # hand world states
    hand_p = [hand_world_position(params, c, i, R) for i in range(2)]
    hand_v = [hand_world_velocity(params, c, i, R) for i in range(2)]

    # grasp coupling
    grasp_on_obj = np.zeros((2, 3))
    if obj is not None and params.grasp is not None and params.object_spec is not None:
        grasp_on_obj, stretch, react_f, react_tau = grasp_forces(
            params.grasp, c, obj, params.object_spec, params)
        rec.grasp_force_obj = grasp_on_obj
        rec.grasp_stretch = stretch
        rec.grasp_broken = bool(np.any(stretch > params.grasp.max_stretch))
        rec.base_reaction_force = react_f
        rec.base_reaction_torque = react_tau

    # support-object joint
    joint_on_obj = None
    joint_on_sup = None
    if obj is not None and sup is not None and params.joint is not None:
        joint_on_sup, joint_on_obj, f_j, tau_j = compliant_joint_wrench(params.joint, sup, obj)
        rec.joint_force = f_j
        rec.joint_torque = tau_j

    # --- carrier ---
    base_force = np.zeros(3)   # world x, y and leg-z channels
    base_torque_z = tau[BASE_YAW]
    base_force[0] = tau[BASE_X] + lim[BASE_X]
    base_force[1] = tau[BASE_Y] + lim[BASE_Y]
    base_force[2] = tau[LEG] + lim[LEG]
    if params.leg_gravity_ff:
        base_force[2] += (c.base_mass + 2.0 * c.hand_point_mass) * g

    new_hand_p = []
    new_hand_v = []
    m_h = c.hand_point_mass
    for i in range(2):
        attach = R @ (tau[HAND_SLICES[i]] + lim[HAND_SLICES[i]])  # base->hand attachment force
        f_hand = attach + ext.hand_forces[i] - grasp_on_obj[i]
        f_hand = f_hand + np.array([0.0, 0.0, -m_h * g])
        # reaction of the attachment on the base
        base_force -= attach
        r = hand_p[i] - base_pos
        base_torque_z -= r[0] * attach[1] - r[1] * attach[0]
        v_new = hand_v[i] + dt * (f_hand / m_h)
        new_hand_v.append(v_new)
        new_hand_p.append(hand_p[i] + dt * v_new)

    acc_x = base_force[0] / c.base_mass
    acc_y = base_force[1] / c.base_mass
    acc_z = base_force[2] / c.base_mass - g
    acc_yaw = base_torque_z / c.base_yaw_inertia

    nqd = qd.copy()
    nq = q.copy()
    nqd[BASE_X] = qd[BASE_X] + dt * acc_x
    nqd[BASE_Y] = qd[BASE_Y] + dt * acc_y
    nqd[BASE_YAW] = qd[BASE_YAW] + dt * acc_yaw
    nqd[LEG] = qd[LEG] + dt * acc_z
    nq[BASE_X] = q[BASE_X] + dt * nqd[BASE_X]
    nq[BASE_Y] = q[BASE_Y] + dt * nqd[BASE_Y]
    nq[BASE_YAW] = q[BASE_YAW] + dt * nqd[BASE_YAW]
    nq[LEG] = q[LEG] + dt * nqd[LEG]

    for idx in HAND_YAW_IDX:
        alpha = (tau[idx] + lim[idx]) / params.hand_yaw_inertia
        nqd[idx] = qd[idx] + dt * alpha
        nq[idx] = q[idx] + dt * nqd[idx]

    # map integrated hand world states back into generalized coordinates
    new_base_pos = np.array([nq[BASE_X], nq[BASE_Y], nq[LEG]])
    new_base_vel = np.array([nqd[BASE_X], nqd[BASE_Y], nqd[LEG]])
    new_wz = nqd[BASE_YAW]
    Rn = rot_z(nq[BASE_YAW])
    for i in range(2):
        r = new_hand_p[i] - new_base_pos
        rel_v = new_hand_v[i] - new_base_vel - np.array([-new_wz * r[1], new_wz * r[0], 0.0])
        nq[HAND_SLICES[i]] = Rn.T @ r - params.nominal_hand_offsets[i]
        nqd[HAND_SLICES[i]] = Rn.T @ rel_v

    new_carrier = CarrierState(nq, nqd, c.base_mass, c.base_yaw_inertia, c.hand_point_mass)

    # --- object ---
    new_obj = None
    if obj is not None:
        f_o = np.array([0.0, 0.0, -obj.mass * g])
        tau_o = np.zeros(3)
        Ro = quat.to_matrix(obj.orientation)
        if params.object_spec is not None and params.grasp is not None:
            for i in range(2):
                r_g = Ro @ params.object_spec.robot_grasp_offsets[i]
                f_o = f_o + grasp_on_obj[i]
                tau_o = tau_o + _cross(r_g, grasp_on_obj[i])
        if joint_on_obj is not None:
            f_o = f_o + joint_on_obj[0]
            tau_o = tau_o + joint_on_obj[1]
        v_new = obj.lin_vel + dt * (f_o / obj.mass)
        q_new, w_new = _advance_rotation(obj, tau_o, dt)
        new_obj = BodyState6D(obj.position + dt * v_new, q_new, v_new, w_new,
                              obj.mass, obj.inertia_diag.copy())

    # --- support (driven body: the environment re-imposes its horizontal
    # velocity at control boundaries; within a physics step it yields to the
    # joint reaction like the body it is; roll/pitch locked) ---
    new_sup = None
    if sup is not None:
        f_z = ext.support_force_z - sup.mass * g
        t_z = ext.support_torque_z
        f_xy = np.zeros(2)
        if joint_on_sup is not None:
            f_xy = joint_on_sup[0][:2]
            f_z += joint_on_sup[0][2]
            t_z += joint_on_sup[1][2]
        vxy_new = sup.lin_vel[:2] + dt * f_xy / sup.mass
        vz_new = sup.lin_vel[2] + dt * f_z / sup.mass
        wz_new = sup.ang_vel[2] + dt * t_z / sup.inertia_diag[2]
        lin_new = np.array([vxy_new[0], vxy_new[1], vz_new])
        q_new = quat.integrate(sup.orientation, np.array([0.0, 0.0, wz_new]), dt)
        new_sup = BodyState6D(sup.position + dt * lin_new, q_new, lin_new,
                              np.array([0.0, 0.0, wz_new]), sup.mass, sup.inertia_diag.copy())

    out = WorldState(carrier=new_carrier, object=new_obj, support=new_sup,
                     time=world.time + dt, forces=rec)
    _check_finite(out)
    return out


def _check_finite(world):
    if not (_finite(world.carrier.q) and _finite(world.carrier.qd)):
        raise SimulationDiverged("carrier.q/qd")
    for name in ("object", "support"):
        b = getattr(world, name)
        if b is None:
            continue
        for f_name in ("position", "orientation", "lin_vel", "ang_vel"):
            if not _finite(getattr(b, f_name)):
                raise SimulationDiverged(f"{name}.{f_name}")


def mechanical_energy(params, world):
    """Kinetic + elastic + gravitational energy of everything step() simulates.

    Used by the damped-dissipation tests; gravity potential uses world z = 0 datum.
    """
    c = world.carrier
    e = 0.5 * c.base_mass * (c.qd[BASE_X] ** 2 + c.qd[BASE_Y] ** 2 + c.qd[LEG] ** 2)
    e += 0.5 * c.base_yaw_inertia * c.qd[BASE_YAW] ** 2
    e += c.base_mass * params.gravity * c.q[LEG]
    for i in range(2):
        v = hand_world_velocity(params, c, i)
        p = hand_world_position(params, c, i)
        e += 0.5 * c.hand_point_mass * (v @ v)
        e += c.hand_point_mass * params.gravity * p[2]
        e += 0.5 * params.hand_yaw_inertia * c.qd[HAND_YAW_IDX[i]] ** 2
    if world.object is not None:
        o = world.object
        e += 0.5 * o.mass * (o.lin_vel @ o.lin_vel)
        L = _body_ang_momentum(o)
        e += 0.5 * (o.ang_vel @ L)
        e += o.mass * params.gravity * o.position[2]
        if params.grasp is not None and params.object_spec is not None:
            Ro = quat.to_matrix(o.orientation)
            for i in range(2):
                p_h = hand_world_position(params, c, i)
                p_g = o.position + Ro @ params.object_spec.robot_grasp_offsets[i]
                d = p_h - p_g
                e += 0.5 * params.grasp.stiffness * (d @ d)
        if world.support is not None and params.joint is not None:
            j = params.joint
            _, _, f, t = compliant_joint_wrench(j, world.support, o)
            # recompute displacement for elastic energy (within limits only)
            Rs = quat.to_matrix(world.support.orientation)
            a_s = world.support.position + Rs @ j.anchor_support
            Ro = quat.to_matrix(o.orientation)
            a_o = o.position + Ro @ j.anchor_object
            dt_ = Rs.T @ (a_o - a_s)
            dr_ = quat.to_rotvec(quat.multiply(quat.conjugate(world.support.orientation), o.orientation))
            d6 = np.concatenate([dt_, dr_])
            e += 0.5 * np.sum(j.stiffness * d6 * d6)
    return e
