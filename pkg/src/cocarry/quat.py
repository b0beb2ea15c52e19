"""Unit-quaternion helpers (w, x, y, z convention, world-frame angular velocity)."""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.sqrt(q @ q)
    if n < 1e-12:
        raise ValueError("degenerate quaternion (norm ~ 0)")
    return q / n


def multiply(q1, q2):
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotate(q, v):
    """Rotate vector v by quaternion q (body -> world for a body orientation)."""
    return to_matrix(q) @ np.asarray(v, dtype=float)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    n = np.sqrt(axis @ axis)
    if n < 1e-12:
        return IDENTITY.copy()
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def from_yaw(yaw):
    half = 0.5 * yaw
    return np.array([np.cos(half), 0.0, 0.0, np.sin(half)])


def yaw_of(q):
    """Extract the z rotation of q (exact for yaw-only quaternions)."""
    w, x, y, z = q
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def exp_map(omega_dt):
    """Quaternion for a rotation-vector increment omega*dt."""
    v = np.asarray(omega_dt, dtype=float)
    angle = np.sqrt(v @ v)
    if angle < 1e-10:
        # second-order small-angle expansion keeps the update smooth near zero
        half = 0.5 * v
        return normalize(np.concatenate(([1.0 - 0.125 * angle * angle], half)))
    return np.concatenate(([np.cos(0.5 * angle)], np.sin(0.5 * angle) * v / angle))


def integrate(q, omega_world, dt):
    """Advance orientation by world-frame angular velocity over dt; renormalizes."""
    return normalize(multiply(exp_map(np.asarray(omega_world, dtype=float) * dt), q))


def to_rotvec(q):
    """Rotation vector (axis * angle) of q, shortest path."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    w = min(1.0, max(-1.0, q[0]))
    s2 = q[1:] @ q[1:]
    if s2 < 1e-16:
        return 2.0 * q[1:]
    angle = 2.0 * np.arccos(w)
    return q[1:] * (angle / np.sqrt(s2))


def slerp(q0, q1, t):
    """Spherical interpolation with shortest-path sign correction.

    Near-parallel inputs fall back to normalized lerp. For inputs that are
    antipodal as 4-vectors (same rotation), the sign flip makes the path the
    constant one, which is the documented tie-break.
    """
    q0 = normalize(q0)
    q1 = normalize(q1)
    d = float(q0 @ q1)
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-10:
        return normalize(q0 + t * (q1 - q0))
    theta = np.arccos(min(1.0, d))
    s = np.sin(theta)
    return (np.sin((1.0 - t) * theta) * q0 + np.sin(t * theta) * q1) / s
