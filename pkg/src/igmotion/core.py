"""Skeleton and pose model.

A skeleton is a tree of joints with constant local offsets; each joint
drives exactly one rigid body (link).  A pose stores the root transform
plus one local rotation per non-root joint.  Forward kinematics and the
pose-delta composition below are the only ways poses turn into world-space
geometry, so everything downstream (markers, graphs, rewards) inherits
their conventions: y is up by default, distances are meters, quaternions
are unit (w, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from . import quat

UNIT_TOL = 1e-9

_AXES = {"x": 0, "y": 1, "z": 2}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Joint:
    name: str
    parent: Optional[int]
    offset: Tuple[float, float, float]
    body: str = ""
    mass: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.offset)):
            raise ModelError(f"joint {self.name!r}: offset must be finite")
        if not (self.mass > 0.0 and np.isfinite(self.mass)):
            raise ModelError(f"joint {self.name!r}: mass must be positive")
        if not self.body:
            object.__setattr__(self, "body", self.name)


@dataclass(frozen=True)
class Skeleton:
    joints: Tuple[Joint, ...]
    up_axis: str = "y"

    def __post_init__(self):
        if self.up_axis not in _AXES:
            raise ModelError(f"unknown up axis {self.up_axis!r}")
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ModelError("joint names must be unique")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if len(roots) != 1:
            raise ModelError(f"skeleton must have exactly one root, found {len(roots)}")
        if roots[0] != 0:
            raise ModelError("root joint must come first")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not (0 <= j.parent < i):
                raise ModelError(
                    f"joint {j.name!r}: parent index {j.parent} must precede joint {i}"
                )
        bodies = [j.body for j in self.joints]
        if len(set(bodies)) != len(bodies):
            raise ModelError("body names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})
        object.__setattr__(self, "_body_index", {b: i for i, b in enumerate(bodies)})
        nr = [i for i in range(len(self.joints)) if self.joints[i].parent is not None]
        object.__setattr__(self, "_non_root", tuple(nr))
        object.__setattr__(
            self, "_offsets", np.array([j.offset for j in self.joints], dtype=float)
        )

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def non_root_indices(self) -> Tuple[int, ...]:
        return self._non_root

    @property
    def up_index(self) -> int:
        return _AXES[self.up_axis]

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    def joint_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown joint {name!r}") from None

    def body_joint(self, body: str) -> int:
        try:
            return self._body_index[body]
        except KeyError:
            raise ModelError(f"unknown body {body!r}") from None

    def children(self, index: int) -> Tuple[int, ...]:
        return tuple(i for i, j in enumerate(self.joints) if j.parent == index)

    def masses(self) -> np.ndarray:
        return np.array([j.mass for j in self.joints], dtype=float)


def _check_unit(q: np.ndarray, what: str):
    err = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if np.any(err > UNIT_TOL):
        raise ModelError(f"{what}: quaternion norm off by {float(np.max(err)):.3e}")


@dataclass(frozen=True)
class Pose:
    """Root transform plus local rotations for each non-root joint, in
    skeleton order."""

    root_position: np.ndarray
    root_orientation: np.ndarray
    joint_rotations: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.root_position, dtype=float).reshape(3)
        q = np.asarray(self.root_orientation, dtype=float).reshape(4)
        j = np.asarray(self.joint_rotations, dtype=float)
        if j.ndim != 2 or j.shape[1] != 4:
            raise ModelError("joint_rotations must be (n_joints - 1, 4)")
        _check_unit(q, "root orientation")
        _check_unit(j, "joint rotation")
        for name, arr in (("root_position", p), ("root_orientation", q), ("joint_rotations", j)):
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} must be finite")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class FacingFrame:
    """Ground projection of a root transform: planar position (the two
    non-up coordinates, in axis order) and heading about the up axis."""

    position: Tuple[float, float]
    heading: float


@dataclass(frozen=True)
class ScaleSpec:
    """Per-joint limb-length scale factors; joints not listed keep factor 1."""

    factors: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, f in self.factors.items():
            if not (f > 0.0 and np.isfinite(f)):
                raise ModelError(f"scale for {name!r} must be positive, got {f}")

    def factor(self, name: str) -> float:
        return float(self.factors.get(name, 1.0))

    def is_uniform(self) -> bool:
        vals = set(self.factors.values())
        return len(vals) <= 1

    def uniform_factor(self) -> float:
        vals = set(self.factors.values())
        if len(vals) > 1:
            raise ModelError("scale spec is not uniform")
        return vals.pop() if vals else 1.0


def fk_arrays(
    skeleton: Skeleton,
    root_position: np.ndarray,
    root_orientation: np.ndarray,
    joint_rotations: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward kinematics over arbitrary leading batch axes.

    Parameters
    ----------
    root_position : (..., 3)
    root_orientation : (..., 4)
    joint_rotations : (..., J-1, 4) local rotations for non-root joints in
        skeleton order.

    Returns
    -------
    positions : (..., J, 3) world joint positions
    orientations : (..., J, 4) world joint orientations
    """
    root_position = np.asarray(root_position, dtype=float)
    root_orientation = np.asarray(root_orientation, dtype=float)
    joint_rotations = np.asarray(joint_rotations, dtype=float)
    J = skeleton.n_joints
    if joint_rotations.shape[-2:] != (J - 1, 4):
        raise ModelError(
            f"joint_rotations must end in ({J - 1}, 4), got {joint_rotations.shape}"
        )
    batch = np.broadcast_shapes(
        root_position.shape[:-1], root_orientation.shape[:-1], joint_rotations.shape[:-2]
    )
    pos = np.empty(batch + (J, 3))
    rot = np.empty(batch + (J, 4))
    pos[..., 0, :] = root_position
    rot[..., 0, :] = root_orientation
    offsets = skeleton.offsets
    local = {gi: k for k, gi in enumerate(skeleton.non_root_indices)}
    for i in range(1, J):
        p = skeleton.joints[i].parent
        rp = rot[..., p, :]
        rot[..., i, :] = quat.mul(rp, joint_rotations[..., local[i], :])
        pos[..., i, :] = pos[..., p, :] + quat.rotate(rp, offsets[i])
    return pos, rot


def forward_kinematics(skeleton: Skeleton, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """World positions (J, 3) and orientations (J, 4) for one pose."""
    return fk_arrays(
        skeleton, pose.root_position, pose.root_orientation, pose.joint_rotations
    )


def heading_about(q: np.ndarray, up_index: int) -> np.ndarray:
    """Heading angle of orientations q about the given up axis.

    Uses the swing-twist split; a pure rotation by a about the up axis has
    heading a.  When the twist component vanishes (the orientation is a
    half-turn about a ground axis) the heading falls back to projecting the
    rotated forward axis onto the ground plane, or 0 if that also fails.
    """
    q = np.asarray(q, dtype=float)
    heading = quat.twist_about(q, up_index)
    degenerate = np.hypot(q[..., 0], q[..., 1 + up_index]) < 1e-9
    if np.any(degenerate):
        up = np.zeros(3)
        up[up_index] = 1.0
        fwd = np.zeros(3)
        fwd[(up_index + 1) % 3] = 1.0
        side = np.cross(up, fwd)
        f = quat.rotate(q, fwd)
        s, c = f @ side, f @ fwd
        fallback = np.where(np.hypot(s, c) > 1e-9, np.arctan2(s, c), 0.0)
        heading = np.where(degenerate, fallback, heading)
    return heading


def compute_facing_frame(pose: Pose, up_axis: str = "y") -> FacingFrame:
    """Facing frame of a pose root: planar position and heading."""
    up = _AXES[up_axis]
    planar = [i for i in range(3) if i != up]
    pos = pose.root_position
    heading = float(heading_about(pose.root_orientation, up))
    return FacingFrame((float(pos[planar[0]]), float(pos[planar[1]])), heading)


def apply_scale(skeleton: Skeleton, spec: ScaleSpec) -> Skeleton:
    """Scale joint offsets by per-joint factors.

    The factor attached to a joint scales that joint's offset from its
    parent, so chains of factors lengthen or shorten limbs without touching
    topology, masses, or marker bookkeeping elsewhere.
    """
    for name in spec.factors:
        skeleton.joint_index(name)
    joints = []
    for j in skeleton.joints:
        f = spec.factor(j.name)
        off = tuple(float(c * f) for c in j.offset)
        joints.append(Joint(j.name, j.parent, off, j.body, j.mass))
    return Skeleton(tuple(joints), skeleton.up_axis)


def apply_action(pose: Pose, deltas: np.ndarray) -> Pose:
    """Compose per-joint rotation deltas onto a pose.

    ``deltas`` is (J-1, 3): one rotation vector per non-root joint, applied
    in the joint's local frame.  The root transform is untouched.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (pose.joint_rotations.shape[0], 3):
        raise ModelError(
            f"deltas must be ({pose.joint_rotations.shape[0]}, 3), got {deltas.shape}"
        )
    rotated = quat.mul(pose.joint_rotations, quat.from_rotvec(deltas))
    rotated = quat.normalize(rotated)
    return Pose(pose.root_position.copy(), pose.root_orientation.copy(), rotated)
