"""Procedural demo clips.

These clips exist so the package can exercise and demonstrate retargeting
without shipping capture data.  The main one is a two-person high five:
both characters start in an exact T-pose on frame 0 (the calibration
frame), drop their arms, then lean toward each other and bring both hands
to planned meeting points at chest height, holding them there for a dozen
frames before settling back.  Hand placement during the hold comes from a
two-segment analytic reach solve, so the contact gap between opposing
palms is met exactly, frame by frame, even while the bodies bob.  The deep
bow is balanced: the legs pitch back just enough to keep the planar center
of mass where it stood, which is what lets the clip scale cleanly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from . import quat
from .core import Skeleton, fk_arrays
from .presets import (
    HUMANOID_ROOT_HEIGHT,
    box_markers,
    humanoid_markers,
    humanoid_skeleton,
)
from .reward import center_of_mass
from .scene import Character, Scene, SceneObject


def smoothstep(x) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def phase(t: np.ndarray, start: float, end: float) -> np.ndarray:
    """0 before start, 1 after end, smooth in between."""
    return smoothstep((t - start) / max(end - start, 1e-9))


def reach_pose(
    skeleton: Skeleton,
    root_position: np.ndarray,
    root_orientation: np.ndarray,
    side: str,
    target: np.ndarray,
    pole: np.ndarray,
):
    """Shoulder and elbow rotations putting the wrist of one arm on target.

    Solves the two-segment reach in world space: the elbow bends in the
    plane spanned by the shoulder-to-target line and ``pole`` (a hint for
    which way the elbow points), and the target is clamped to the annulus
    the arm can actually cover.  Returns (shoulder_q, elbow_q) as local
    joint rotations; the wrist joint is left alone.
    """
    shoulder = f"upperarm_{side}"
    elbow = f"forearm_{side}"
    wrist = f"hand_{side}"
    si = skeleton.joint_index(shoulder)
    offs = skeleton.offsets
    u_off = offs[skeleton.joint_index(elbow)]
    f_off = offs[skeleton.joint_index(wrist)]
    u_len = float(np.linalg.norm(u_off))
    f_len = float(np.linalg.norm(f_off))
    a_local = u_off / u_len

    # chain above the shoulder holds identity local rotations here, so the
    # parent world rotation is just the root's and positions come from offsets
    q_parent = np.asarray(root_orientation, dtype=float)
    chain_off = np.zeros(3)
    j = si
    while j is not None and j != 0:
        chain_off += offs[j]
        j = skeleton.joints[j].parent
    shoulder_pos = np.asarray(root_position) + quat.rotate(q_parent, chain_off)

    d = np.asarray(target, dtype=float) - shoulder_pos
    dist = float(np.linalg.norm(d))
    reach = min(max(dist, abs(u_len - f_len) + 1e-6), u_len + f_len - 1e-6)
    d_hat = d / dist

    pole = np.asarray(pole, dtype=float)
    pole = pole - d_hat * float(np.dot(pole, d_hat))
    if np.linalg.norm(pole) < 1e-9:
        raise ValueError("reach pole is parallel to the target direction")
    bend_axis = np.cross(d_hat, pole / np.linalg.norm(pole))
    bend_axis /= np.linalg.norm(bend_axis)

    cos_alpha = (u_len**2 + reach**2 - f_len**2) / (2.0 * u_len * reach)
    alpha = math.acos(min(1.0, max(-1.0, cos_alpha)))
    upper_dir = quat.rotate(quat.from_axis_angle(bend_axis, alpha), d_hat)
    elbow_pos = shoulder_pos + u_len * upper_dir
    fore_dir = np.asarray(target) - elbow_pos
    fore_dir /= np.linalg.norm(fore_dir)

    def aim(q_world_parent, direction):
        rest = quat.rotate(q_world_parent, a_local)
        corr = quat.shortest_arc(rest, direction)
        return quat.mul(quat.mul(quat.conj(q_world_parent), corr), q_world_parent)

    q_sh = aim(q_parent, upper_dir)
    q_upper_world = quat.mul(q_parent, q_sh)
    q_el = aim(q_upper_world, fore_dir)
    return q_sh, q_el


# resting arms: shoulders rolled ~80 degrees down from the T-pose, a hint of
# elbow bend so the arms do not look locked
_REST_ARM = {
    "upperarm_r": quat.from_rotvec(np.array([0.0, 0.0, math.radians(80.0)])),
    "forearm_r": quat.from_rotvec(np.array([0.0, math.radians(12.0), 0.0])),
    "upperarm_l": quat.from_rotvec(np.array([0.0, 0.0, math.radians(-80.0)])),
    "forearm_l": quat.from_rotvec(np.array([0.0, math.radians(-12.0), 0.0])),
}


def _character_tracks(
    skeleton: Skeleton,
    n_frames: int,
    fps: float,
    stand_at: np.ndarray,
    yaw: float,
    meets,
    delay: int,
    lean: float = 0.0,
    balance: bool = True,
):
    T = n_frames
    t = np.arange(T, dtype=float)
    up = np.array([0.0, 1.0, 0.0])
    root_q = np.tile(quat.from_axis_angle(up, yaw), (T, 1))

    # gentle vertical bob, zero on the calibration frame
    bob = 0.012 * 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (2.0 * fps)))
    root_p = np.tile(np.asarray(stand_at, dtype=float), (T, 1))
    root_p[:, 1] = HUMANOID_ROOT_HEIGHT + bob

    s_rest = phase(t, 0.0 + delay, 14.0 + delay)
    if not meets:
        s_five = np.zeros(T)
    else:
        # the hold stretches with the clip; release starts 30 frames from
        # the end and finishes with 5 frames of settled rest
        rel = max(T - 30.0, 46.0)
        s_five = phase(t, 20.0 + delay, 45.0 + delay) - phase(t, rel + delay, rel + 25.0 + delay)

    J = skeleton.n_joints
    rots = np.tile(quat.IDENTITY, (T, J - 1, 1))

    def set_joint(frame, name, q):
        rots[frame, skeleton.joint_index(name) - 1] = q

    spine_off = np.asarray(skeleton.joints[skeleton.joint_index("spine_1")].offset)
    ident = quat.IDENTITY
    for f in range(T):
        for name, q_rest in _REST_ARM.items():
            set_joint(f, name, quat.slerp(ident, q_rest, s_rest[f]))
        if s_five[f] <= 0.0:
            continue
        if balance:
            # forward balance of the stance before the bow, measured from
            # the pelvis along the facing direction; the leg pitch below
            # holds it there through the lean, so the body reaches like
            # someone leaning over a counter, chest down and legs back
            pos_rest, _ = fk_arrays(skeleton, root_p[f], root_q[f], rots[f])
            com_rest = center_of_mass(skeleton, pos_rest)
            anchor = quat.rotate(quat.conj(root_q[f]), com_rest - root_p[f])[2]
        # the whole upper body pitches toward the partner; local +x tips the
        # chest along the facing direction for any yaw
        q_lean = quat.from_axis_angle(np.array([1.0, 0.0, 0.0]), lean * s_five[f])
        set_joint(f, "spine_1", q_lean)
        # reach_pose walks offsets with identity locals above the shoulder,
        # so fold the spine tilt into the frame it is given and shift the
        # origin to keep the spine joint where forward kinematics puts it
        tilted = quat.mul(root_q[f], q_lean)
        origin = (
            root_p[f]
            + quat.rotate(root_q[f], spine_off)
            - quat.rotate(tilted, spine_off)
        )
        for side, target in meets.items():
            sgn = -1.0 if side == "r" else 1.0
            pole = quat.rotate(root_q[f], np.array([sgn * 0.6, -1.0, 0.0]))
            q_sh, q_el = reach_pose(skeleton, origin, tilted, side, target, pole)
            for name, q in ((f"upperarm_{side}", q_sh), (f"forearm_{side}", q_el)):
                k = skeleton.joint_index(name) - 1
                set_joint(f, name, quat.slerp(rots[f, k], q, s_five[f]))

        if balance:

            def balance_gap(phi):
                q_hip = quat.from_axis_angle(np.array([1.0, 0.0, 0.0]), phi)
                q_foot = quat.from_axis_angle(np.array([1.0, 0.0, 0.0]), -phi)
                for name in ("thigh_l", "thigh_r"):
                    set_joint(f, name, q_hip)
                for name in ("foot_l", "foot_r"):
                    set_joint(f, name, q_foot)
                pos, _ = fk_arrays(skeleton, root_p[f], root_q[f], rots[f])
                com = center_of_mass(skeleton, pos)
                return quat.rotate(quat.conj(root_q[f]), com - root_p[f])[2] - anchor

            brentq(balance_gap, -0.6, 1.55, xtol=1e-10)
    return root_p, root_q, rots


def build_highfive_scene(
    n_frames: int = 120,
    fps: float = 30.0,
    separation: float = 0.62,
    contact_gap: float = 0.04,
    meet_height: float = 1.05,
    meet_spread: float = 0.10,
    lean: float = 0.95,
    lean_b: float | None = 0.25,
    balance_b: bool = False,
) -> Scene:
    """Two humanoids facing each other trading a two-handed high five.

    Each character's right palm meets the partner's left palm at
    ``meet_height``, ``meet_spread`` to either side of the center line,
    while the torsos pitch toward each other (``lean`` radians for the
    first character, ``lean_b`` for the second, defaulting to ``lean``).
    ``contact_gap`` is the palm-to-palm distance held while the hands are
    planted; the second character runs a few frames behind the first so
    the clip is not mirror symmetric.  ``balance_b`` routes the second
    character's lean through the same planar-balance solve the first one
    always gets.

    The default geometry is deliberately close quarters: the first
    character bows deep over the meeting line (head ducking under the
    partner's) while the second only nods, so the meeting points sit
    outside the second character's torso-neutral reach.  That keeps the
    hold interesting for retargeting studies: reaching it at half scale
    requires leaning in, not just straightening an arm.
    """
    skel = humanoid_skeleton()
    half = 0.5 * separation
    gap = 0.5 * contact_gap
    meets_a = {
        "r": np.array([-meet_spread, meet_height, -gap]),
        "l": np.array([+meet_spread, meet_height, -gap]),
    }
    meets_b = {
        "r": np.array([+meet_spread, meet_height, +gap]),
        "l": np.array([-meet_spread, meet_height, +gap]),
    }

    pa, qa, ra = _character_tracks(
        skel, n_frames, fps, np.array([0.0, 0.0, -half]), 0.0, meets_a,
        delay=0, lean=lean,
    )
    # the second character's shallow nod is left unbalanced by default:
    # people do not counterweight a small reach, their balance point just
    # drifts a little; pass balance_b=True for a clip that scales cleanly
    pb, qb, rb = _character_tracks(
        skel, n_frames, fps, np.array([0.0, 0.0, +half]), math.pi, meets_b,
        delay=4, lean=lean if lean_b is None else lean_b, balance=balance_b,
    )
    return Scene(
        fps=fps,
        characters=(
            Character("a", skel, humanoid_markers("a"), pa, qa, ra),
            Character("b", skel, humanoid_markers("b"), pb, qb, rb),
        ),
    )


def build_prop_scene(n_frames: int = 30, fps: float = 30.0) -> Scene:
    """The two standing humanoids plus a slowly turning box off to the side."""
    skel = humanoid_skeleton()
    pa, qa, ra = _character_tracks(
        skel, n_frames, fps, np.array([0.0, 0.0, -0.45]), 0.0, None, delay=0
    )
    pb, qb, rb = _character_tracks(
        skel, n_frames, fps, np.array([0.0, 0.0, 0.45]), math.pi, None, delay=4
    )
    t = np.arange(n_frames, dtype=float)
    half_extents = (0.10, 0.10, 0.10)
    pos = np.tile(np.array([0.55, 1.05, 0.0]), (n_frames, 1))
    pos[:, 2] += 0.05 * np.sin(2.0 * np.pi * t / (2.0 * fps))
    spin = 0.4 * np.sin(2.0 * np.pi * t / (3.0 * fps))
    rot = quat.from_rotvec(np.array([0.0, 1.0, 0.0]) * spin[:, None])
    box = SceneObject("box", box_markers("box", half_extents), pos, rot, half_extents)
    return Scene(
        fps=fps,
        characters=(
            Character("a", skel, humanoid_markers("a"), pa, qa, ra),
            Character("b", skel, humanoid_markers("b"), pb, qb, rb),
        ),
        objects=(box,),
    )


def hand_gap(scene: Scene, frame: int) -> float:
    """Largest distance across the two meeting hand pairs on one frame."""
    table = scene.marker_table()
    P = scene.marker_positions()[frame]
    gaps = []
    for ma, mb in (("a:hand_r", "b:hand_l"), ("a:hand_l", "b:hand_r")):
        ia = table.names.index(ma)
        ib = table.names.index(mb)
        gaps.append(float(np.linalg.norm(P[ia] - P[ib])))
    return max(gaps)


def main(argv=None) -> int:
    import argparse

    from .scene import save_scene

    ap = argparse.ArgumentParser(description="write a bundled demo clip as scene JSON")
    ap.add_argument("out", help="output path")
    ap.add_argument("--clip", choices=("highfive", "prop"), default="highfive")
    ap.add_argument("--frames", type=int, default=90)
    ap.add_argument("--fps", type=float, default=30.0)
    args = ap.parse_args(argv)
    if args.clip == "highfive":
        scene = build_highfive_scene(n_frames=args.frames, fps=args.fps)
    else:
        scene = build_prop_scene(n_frames=args.frames, fps=args.fps)
    save_scene(scene, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
