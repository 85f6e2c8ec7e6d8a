"""Shared scene factories.

The tiny tetrapod character keeps unit tests fast: four joints, four
markers, generic (non-coplanar) geometry, a few frames of smooth motion.
Anything that needs realistic humanoids builds a synth scene instead.
"""

import numpy as np
import pytest

from igmotion import quat
from igmotion.core import Joint, Skeleton
from igmotion.scene import Character, MarkerSpec, Scene


def tet_skeleton():
    joints = (
        Joint("root", None, (0.0, 0.0, 0.0)),
        Joint("limb_a", 0, (0.30, 0.10, 0.05)),
        Joint("limb_b", 0, (-0.25, 0.15, -0.10)),
        Joint("limb_c", 1, (0.05, 0.25, 0.20)),
    )
    return Skeleton(joints)


def make_character(name, n_frames, fps=30.0, at=(0.0, 1.0, 0.0), drift=(0.0, 0.0, 0.0), wiggle=0.0, seed=0):
    """Tetrapod with linear root drift and optional joint wiggle.

    Frame 0 is the calibration pose (identity rotations), so wiggle ramps
    in from zero.
    """
    sk = tet_skeleton()
    t = np.arange(n_frames) / fps
    root_pos = np.asarray(at, float) + t[:, None] * np.asarray(drift, float)
    root_q = np.tile(quat.IDENTITY, (n_frames, 1))
    rots = np.tile(quat.IDENTITY, (n_frames, sk.n_joints - 1, 1))
    if wiggle:
        rng = np.random.default_rng(seed)
        axes = rng.standard_normal((sk.n_joints - 1, 3))
        axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
        for j in range(sk.n_joints - 1):
            ang = wiggle * np.sin(2.0 * np.pi * (j + 1) * t / t[-1] if n_frames > 1 else t)
            rots[:, j, :] = quat.from_rotvec(ang[:, None] * axes[j])
    markers = tuple(
        MarkerSpec(f"{name}:{sk.joints[i].name}", sk.joints[i].name, (0.02 * i, 0.01, -0.01 * i))
        for i in range(sk.n_joints)
    )
    return Character(name, sk, markers, root_pos, root_q, rots)


def make_pair_scene(n_frames=8, fps=30.0, separation=0.8, wiggle=0.3, drift=True):
    a = make_character(
        "a", n_frames, fps, at=(-separation / 2, 1.0, 0.0),
        drift=(0.05, 0.0, 0.02) if drift else (0, 0, 0), wiggle=wiggle, seed=1,
    )
    b = make_character(
        "b", n_frames, fps, at=(separation / 2, 1.0, 0.1),
        drift=(-0.04, 0.0, 0.0) if drift else (0, 0, 0), wiggle=wiggle, seed=2,
    )
    return Scene(fps, (a, b))


@pytest.fixture
def pair_scene():
    return make_pair_scene()


@pytest.fixture
def single_scene():
    return Scene(30.0, (make_character("solo", 6, wiggle=0.2, drift=(0.1, 0, 0)),))
