"""Quaternion helpers.

All functions take arrays whose last axis holds a quaternion in (w, x, y, z)
order and broadcast over any leading axes.  Rotations follow the active
convention: ``rotate(q, v)`` returns the vector obtained by rotating ``v``
by ``q`` in the world frame.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (...,3) by unit quaternions q (...,4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def from_rotvec(r: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation vector (axis * angle)."""
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(x)/x expanded near zero so tiny actions stay exact
    small = angle < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(angle == 0.0, 1.0, angle))
    return np.concatenate([np.cos(half), k * r], axis=-1)


def to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion; magnitude is the full rotation
    angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    sin_half = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(sin_half, q[..., :1])
    small = sin_half < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(small, 2.0 + angle**2 / 12.0, angle / np.where(sin_half == 0.0, 1.0, sin_half))
    return k * q[..., 1:]


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return from_rotvec(axis * float(angle))


def relative_angle(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Angle of the rotation taking q1 to q2."""
    return np.linalg.norm(to_rotvec(mul(conj(q1), q2)), axis=-1)


def shortest_arc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest rotation taking unit vector a onto unit vector b.

    For antiparallel inputs any orthogonal axis works; one is picked
    deterministically.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    d = float(np.dot(a, b))
    if d < -1.0 + 1e-12:
        # 180 degrees: rotate about the coordinate axis least aligned with a
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(a)))] = 1.0
        axis = np.cross(a, axis)
        return from_axis_angle(axis, np.pi)
    q = np.concatenate([[1.0 + d], np.cross(a, b)])
    return normalize(q)


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    wrapped = np.mod(-a + np.pi, 2.0 * np.pi)
    return np.pi - wrapped


def twist_about(q: np.ndarray, axis_index: int) -> np.ndarray:
    """Twist angle of the swing-twist split of q about a coordinate axis.

    The twist is the rotation about the axis that, composed with a swing
    orthogonal to it, reproduces q.  Returns angles in (-pi, pi].  Falls
    back to 0 when the twist component is numerically absent (q is a pure
    swing, e.g. a 180 degree flip about an orthogonal axis).
    """
    q = np.asarray(q, dtype=float)
    w = q[..., 0]
    p = q[..., 1 + axis_index]
    n = np.hypot(w, p)
    angle = 2.0 * np.arctan2(p, w)
    angle = np.where(n < 1e-9, 0.0, angle)
    return wrap_angle(angle)


def slerp(q1: np.ndarray, q2: np.ndarray, t) -> np.ndarray:
    """Spherical interpolation along the shorter arc."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    dot = np.sum(q1 * q2, axis=-1, keepdims=True)
    q2 = np.where(dot < 0.0, -q2, q2)
    rel = mul(conj(q1), q2)
    return mul(q1, from_rotvec(t * to_rotvec(rel)))
