"""Observation vectors for training loops driven by the engine.

An observation pairs the evaluated scene's current state with reference
states a short window ahead:

    o = [ sim(t) | ref(t + off) for each future offset ]

Every block lists rigid-body states, 13 numbers per body: position (3),
orientation quaternion (w, x, y, z; w kept non-negative), linear velocity
(3), angular velocity (3).  Bodies appear controlled character first, then
the other characters in scene order, then objects.  The sim block is
expressed in the controlled character's facing frame at the current frame;
each reference block uses the reference counterpart's facing frame at its
own (clamped) future frame, which makes the whole vector invariant to
planar rigid motion of either scene.

Future offsets are given in seconds and snapped to whole frames; offsets
past the clip end clamp to the last frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import quat
from .core import fk_arrays, heading_about
from .scene import Scene, compute_angular_velocities, compute_velocities

LAYOUT_VERSION = "obs-v1"

BODY_STATE_SIZE = 13


@dataclass(frozen=True)
class ObservationSpec:
    future_offsets: Tuple[float, ...] = (0.0, 0.05, 0.15)

    def __post_init__(self):
        if any(o < 0.0 for o in self.future_offsets):
            raise ValueError("future offsets must be non-negative")


@dataclass(frozen=True)
class Observation:
    vector: np.ndarray
    layout: Tuple[Tuple[str, int, int], ...]  # (label, start, length)
    version: str = LAYOUT_VERSION


def _body_tracks(scene: Scene):
    """Per-entity rigid body state tracks, cached on the scene.

    Returns a list over entities of (positions (T, L, 3), orientations
    (T, L, 4), linear velocities, angular velocities).
    """
    key = "body_tracks"
    if key not in scene._cache:
        tracks = []
        for c in scene.characters:
            pos, rot = fk_arrays(
                c.skeleton, c.root_position, c.root_orientation, c.joint_rotations
            )
            tracks.append(
                (
                    pos,
                    rot,
                    compute_velocities(pos, scene.fps),
                    compute_angular_velocities(rot, scene.fps),
                )
            )
        for o in scene.objects:
            pos = o.position[:, None, :]
            rot = o.orientation[:, None, :]
            tracks.append(
                (
                    pos,
                    rot,
                    compute_velocities(pos, scene.fps),
                    compute_angular_velocities(rot, scene.fps),
                )
            )
        scene._cache[key] = tracks
    return scene._cache[key]


def _facing(scene: Scene, character: str, frame: int):
    c = scene.find_character(character)
    up = c.skeleton.up_index
    heading = float(heading_about(c.root_orientation[frame], up))
    axis = np.zeros(3)
    axis[up] = 1.0
    origin = np.array(c.root_position[frame], dtype=float, copy=True)
    origin[up] = 0.0
    return origin, quat.from_rotvec(axis * heading)


def _block(scene: Scene, entity_order, frame: int, origin, yaw):
    inv = quat.conj(yaw)
    parts = []
    tracks = _body_tracks(scene)
    for ei in entity_order:
        pos, rot, vel, omega = tracks[ei]
        p = quat.rotate(inv, pos[frame] - origin)
        q = quat.mul(inv, rot[frame])
        q = np.where(q[..., :1] < 0.0, -q, q)
        v = quat.rotate(inv, vel[frame])
        w = quat.rotate(inv, omega[frame])
        parts.append(np.concatenate([p, q, v, w], axis=-1).reshape(-1))
    return np.concatenate(parts)


def _entity_order(scene: Scene, character: str):
    names = [e.name for e in scene.entities()]
    ci = names.index(character)
    order = [ci]
    order += [i for i in range(len(scene.characters)) if i != ci]
    order += list(range(len(scene.characters), len(names)))
    return order


def observation_size(scene: Scene, spec: ObservationSpec = ObservationSpec()) -> int:
    bodies = sum(c.skeleton.n_joints for c in scene.characters) + len(scene.objects)
    return BODY_STATE_SIZE * bodies * (1 + len(spec.future_offsets))


def build_observation(
    sim: Scene,
    ref: Scene,
    frame: int,
    character: str,
    spec: ObservationSpec = ObservationSpec(),
) -> Observation:
    """Observation for one character at one frame."""
    if sim.find_character(character) is None:
        raise ValueError(f"unknown character {character!r}")
    if not (0 <= frame < sim.n_frames):
        raise IndexError(f"frame {frame} outside clip of {sim.n_frames} frames")
    order = _entity_order(sim, character)
    origin, yaw = _facing(sim, character, frame)
    blocks = [("sim", _block(sim, order, frame, origin, yaw))]
    for off in spec.future_offsets:
        u = min(frame + int(round(off * ref.fps)), ref.n_frames - 1)
        r_origin, r_yaw = _facing(ref, character, u)
        blocks.append((f"ref+{off:g}s", _block(ref, order, u, r_origin, r_yaw)))
    layout = []
    start = 0
    for label, b in blocks:
        layout.append((label, start, b.shape[0]))
        start += b.shape[0]
    return Observation(np.concatenate([b for _, b in blocks]), tuple(layout))
