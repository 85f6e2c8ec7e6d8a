"""Bundled skeleton and marker presets.

The humanoid is a 22-joint, 22-link biped in a y-up, z-forward frame whose
identity pose is a T-pose (arms along +-x).  Mass numbers are coarse
anthropometric fractions of total body mass; they only feed the
center-of-mass estimate, so their sum does not need to be exactly 1.

Marker sets follow the sparse layout used throughout the package: three
markers per limb at the shoulder/elbow/wrist and hip/knee/ankle joints,
plus one marker each on the pelvis, the torso, and the head (15 per
character).  Boxes get one marker per corner (8).  The upper-body set (8)
covers torsos and arms only, for rigs whose lower body should not
participate in any graph.
"""

from __future__ import annotations

from typing import Sequence, Tuple

from .core import Joint, Skeleton
from .scene import MarkerSpec

# fraction of body mass per link
MASS_FRACTIONS = {
    "pelvis": 0.13,
    "spine_1": 0.10,
    "spine_2": 0.10,
    "chest": 0.14,
    "neck": 0.02,
    "head": 0.06,
    "clavicle_l": 0.02,
    "clavicle_r": 0.02,
    "upperarm_l": 0.025,
    "upperarm_r": 0.025,
    "forearm_l": 0.015,
    "forearm_r": 0.015,
    "hand_l": 0.006,
    "hand_r": 0.006,
    "thigh_l": 0.10,
    "thigh_r": 0.10,
    "shin_l": 0.045,
    "shin_r": 0.045,
    "foot_l": 0.012,
    "foot_r": 0.012,
    "toe_l": 0.003,
    "toe_r": 0.003,
}

# name, parent name (None for root), offset from parent in the T-pose
_HUMANOID_LAYOUT = (
    ("pelvis", None, (0.0, 0.0, 0.0)),
    ("spine_1", "pelvis", (0.0, 0.10, 0.0)),
    ("spine_2", "spine_1", (0.0, 0.11, 0.0)),
    ("chest", "spine_2", (0.0, 0.12, 0.0)),
    ("neck", "chest", (0.0, 0.14, 0.0)),
    ("head", "neck", (0.0, 0.09, 0.0)),
    ("clavicle_l", "chest", (0.035, 0.11, 0.0)),
    ("upperarm_l", "clavicle_l", (0.145, 0.0, 0.0)),
    ("forearm_l", "upperarm_l", (0.28, 0.0, 0.0)),
    ("hand_l", "forearm_l", (0.25, 0.0, 0.0)),
    ("clavicle_r", "chest", (-0.035, 0.11, 0.0)),
    ("upperarm_r", "clavicle_r", (-0.145, 0.0, 0.0)),
    ("forearm_r", "upperarm_r", (-0.28, 0.0, 0.0)),
    ("hand_r", "forearm_r", (-0.25, 0.0, 0.0)),
    ("thigh_l", "pelvis", (0.09, -0.03, 0.0)),
    ("shin_l", "thigh_l", (0.0, -0.42, 0.0)),
    ("foot_l", "shin_l", (0.0, -0.43, 0.0)),
    ("toe_l", "foot_l", (0.0, -0.05, 0.13)),
    ("thigh_r", "pelvis", (-0.09, -0.03, 0.0)),
    ("shin_r", "thigh_r", (0.0, -0.42, 0.0)),
    ("foot_r", "shin_r", (0.0, -0.43, 0.0)),
    ("toe_r", "foot_r", (0.0, -0.05, 0.13)),
)

# default standing height of the pelvis above the ground
HUMANOID_ROOT_HEIGHT = 0.93

_LIMB_MARKER_BODIES = (
    "upperarm_l", "forearm_l", "hand_l",
    "upperarm_r", "forearm_r", "hand_r",
    "thigh_l", "shin_l", "foot_l",
    "thigh_r", "shin_r", "foot_r",
)

_TRUNK_MARKER_BODIES = ("pelvis", "chest", "head")

_UPPER_BODY_MARKER_BODIES = (
    "head", "chest",
    "upperarm_l", "forearm_l", "hand_l",
    "upperarm_r", "forearm_r", "hand_r",
)


def humanoid_skeleton() -> Skeleton:
    index = {name: i for i, (name, _, _) in enumerate(_HUMANOID_LAYOUT)}
    joints = tuple(
        Joint(name, None if parent is None else index[parent], offset,
              mass=MASS_FRACTIONS[name])
        for name, parent, offset in _HUMANOID_LAYOUT
    )
    return Skeleton(joints, up_axis="y")


def _markers_on(entity: str, bodies: Sequence[str]) -> Tuple[MarkerSpec, ...]:
    return tuple(MarkerSpec(f"{entity}:{b}", b, (0.0, 0.0, 0.0)) for b in bodies)


def humanoid_markers(entity: str) -> Tuple[MarkerSpec, ...]:
    """15 markers: three per limb plus pelvis, torso, head."""
    return _markers_on(entity, _TRUNK_MARKER_BODIES + _LIMB_MARKER_BODIES)


def upper_body_markers(entity: str) -> Tuple[MarkerSpec, ...]:
    """8 markers on head, torso, and both arms."""
    return _markers_on(entity, _UPPER_BODY_MARKER_BODIES)


def box_markers(entity: str, half_extents: Sequence[float]) -> Tuple[MarkerSpec, ...]:
    """One marker per box corner, ordered by corner bit pattern (x, y, z)."""
    hx, hy, hz = (float(h) for h in half_extents)
    if min(hx, hy, hz) <= 0.0:
        raise ValueError("half extents must be positive")
    out = []
    for i in range(8):
        sx = -1.0 if i & 4 else 1.0
        sy = -1.0 if i & 2 else 1.0
        sz = -1.0 if i & 1 else 1.0
        out.append(MarkerSpec(f"{entity}:corner_{i}", "", (sx * hx, sy * hy, sz * hz)))
    return tuple(out)
