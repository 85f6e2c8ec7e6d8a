"""Similarity rewards between an evaluated motion and a reference.

The graph terms compare two interaction graphs edge by edge.  Edges inside
one character are normalized by that character's frame-0 calibration pose,
which cancels uniform body scale; edges between entities compare relative
vectors directly, normalized symmetrically by both current edge lengths so
the measure does not care which scene is which.  Every edge is weighted by
a proximity softmax so that close-range relationships dominate exactly
when entities interact.

Each error e feeds a sub-reward exp(-k * e); the frame reward is the plain
product of the four sub-rewards.  All distances are meters; "planar" below
means the two coordinates orthogonal to the character's up axis.

A conventional joint-space imitation reward is included as a baseline.  It
compares joint rotations, link positions, and velocities against the
reference directly, so it requires matching skeletons and has no notion of
the other characters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from . import quat
from .core import Skeleton, fk_arrays, heading_about
from .graph import Connectivity, EdgeClass, build_graph, check_connectivity, reference_connectivity
from .scene import (
    Scene,
    compute_angular_velocities,
    compute_velocities,
    validate_tpose,
)

CROSS_LENGTH_CLAMP = 1e-6  # m


class WeightingMode(str, Enum):
    REF_ONLY = "ref"
    BIDIRECTIONAL = "bidir"


@dataclass(frozen=True)
class RewardParams:
    """Sensitivities and weights of the reward stack.

    These defaults are engine defaults, not calibrated constants; they are
    echoed into every output header so downstream consumers always see the
    values a result was produced with.
    """

    k_w: float = 5.0          # proximity weighting sensitivity, 1/m
    k1: float = 2.0           # graph position error -> reward
    k2: float = 2.0           # graph velocity error -> reward
    k3: float = 5.0           # root error -> reward
    k4: float = 5.0           # COM error -> reward
    w_p: float = 1.0          # root planar position weight
    w_q: float = 1.0          # root orientation weight
    w_v: float = 1.0          # root planar velocity weight
    w_omega: float = 1.0      # root angular velocity weight
    w_com_x: float = 1.0      # COM planar position weight
    w_com_xdot: float = 1.0   # COM planar velocity weight
    weighting_mode: WeightingMode = WeightingMode.REF_ONLY
    cross_length_clamp: float = CROSS_LENGTH_CLAMP
    # rounds the norm kinks at perfectly matched terms so finite-difference
    # solvers see a real gradient there; 0 scores exactly
    softening: float = 0.0

    def __post_init__(self):
        for name in ("k_w", "k1", "k2", "k3", "k4", "softening"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.cross_length_clamp <= 0.0:
            raise ValueError("cross_length_clamp must be positive")
        if not isinstance(self.weighting_mode, WeightingMode):
            object.__setattr__(self, "weighting_mode", WeightingMode(self.weighting_mode))

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["weighting_mode"] = self.weighting_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RewardParams":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown reward parameters: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class RewardBreakdown:
    """Errors, sub-rewards, and the combined reward for one character at
    one frame, plus shared per-edge diagnostics for the frame's graph."""

    frame: int
    character: str
    err_pos_graph: float
    err_vel_graph: float
    err_root: float
    err_com: float
    r_pos_graph: float
    r_vel_graph: float
    r_root: float
    r_com: float
    reward: float
    edge_weights: Optional[np.ndarray] = None
    edge_errors: Optional[np.ndarray] = None
    edge_classes: Optional[np.ndarray] = None
    clamped_edges: int = 0

    def scalars(self) -> dict:
        return {
            "frame": self.frame,
            "character": self.character,
            "err_pos_graph": self.err_pos_graph,
            "err_vel_graph": self.err_vel_graph,
            "err_root": self.err_root,
            "err_com": self.err_com,
            "r_pos_graph": self.r_pos_graph,
            "r_vel_graph": self.r_vel_graph,
            "r_root": self.r_root,
            "r_com": self.r_com,
            "reward": self.reward,
        }


# -- edge-level terms ---------------------------------------------------------


def _softmax_neg(lengths: np.ndarray, k_w: float) -> np.ndarray:
    z = -k_w * lengths
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def edge_weights(
    sim_lengths: np.ndarray, ref_lengths: np.ndarray, params: RewardParams
) -> np.ndarray:
    """Proximity weights over the edge axis (last); each frame's weights
    sum to one.  REF_ONLY weights by reference lengths alone; BIDIRECTIONAL
    averages the reference and evaluated softmaxes."""
    sim_lengths = np.asarray(sim_lengths, dtype=float)
    ref_lengths = np.asarray(ref_lengths, dtype=float)
    if ref_lengths.shape[-1] == 0:
        return np.zeros_like(ref_lengths)
    if params.weighting_mode is WeightingMode.REF_ONLY:
        return _softmax_neg(ref_lengths, params.k_w)
    w = 0.5 * _softmax_neg(sim_lengths, params.k_w) + 0.5 * _softmax_neg(ref_lengths, params.k_w)
    return w


def _soft_norm(v: np.ndarray, eps: float) -> np.ndarray:
    """Euclidean norm over the last axis; eps > 0 rounds the kink at zero
    (sqrt(n^2 + eps^2) - eps), leaving values beyond eps nearly exact."""
    n2 = np.sum(np.square(v), axis=-1)
    if eps <= 0.0:
        return np.sqrt(n2)
    return np.sqrt(n2 + eps * eps) - eps


def self_edge_error(
    rel_sim: np.ndarray,
    tpose_sim: np.ndarray,
    rel_ref: np.ndarray,
    tpose_ref: np.ndarray,
    softening: float = 0.0,
) -> np.ndarray:
    """Within-character edge error: each edge's offset from its calibration
    vector, normalized by the calibration length, compared across scenes.
    Invariant to uniform body scale."""
    ns = np.linalg.norm(tpose_sim, axis=-1, keepdims=True)
    nr = np.linalg.norm(tpose_ref, axis=-1, keepdims=True)
    d = (rel_sim - tpose_sim) / ns - (rel_ref - tpose_ref) / nr
    return _soft_norm(d, softening)


def cross_edge_error(
    rel_sim: np.ndarray,
    rel_ref: np.ndarray,
    clamp: float = CROSS_LENGTH_CLAMP,
    softening: float = 0.0,
) -> np.ndarray:
    """Between-entity edge error, normalized symmetrically by both current
    edge lengths (clamped below to keep near-coincident markers finite)."""
    delta = _soft_norm(rel_sim - rel_ref, softening)
    ls = np.maximum(np.linalg.norm(rel_sim, axis=-1), clamp)
    lr = np.maximum(np.linalg.norm(rel_ref, axis=-1), clamp)
    return 0.5 * delta / ls + 0.5 * delta / lr


def graph_errors(
    rel_pos_sim: np.ndarray,
    rel_vel_sim: np.ndarray,
    rel_pos_ref: np.ndarray,
    rel_vel_ref: np.ndarray,
    classes: np.ndarray,
    tpose_sim: np.ndarray,
    tpose_ref: np.ndarray,
    params: RewardParams,
):
    """Weighted graph position and velocity errors.

    All relative-vector arrays are (..., E, 3); tpose arrays give the
    frame-0 calibration vector per edge (rows for non-SELF edges are
    ignored).  Returns (err_pos, err_vel, weights, per_edge_pos_error,
    clamped_count) with the first two reduced over the edge axis.
    """
    classes = np.asarray(classes)
    sim_len = np.linalg.norm(rel_pos_sim, axis=-1)
    ref_len = np.linalg.norm(rel_pos_ref, axis=-1)
    w = edge_weights(sim_len, ref_len, params)

    is_self = classes == EdgeClass.SELF
    pos_err = np.empty(np.broadcast_shapes(sim_len.shape, ref_len.shape))
    if np.any(is_self):
        pos_err[..., is_self] = self_edge_error(
            rel_pos_sim[..., is_self, :],
            tpose_sim[is_self],
            rel_pos_ref[..., is_self, :],
            tpose_ref[is_self],
            params.softening,
        )
    if np.any(~is_self):
        pos_err[..., ~is_self] = cross_edge_error(
            rel_pos_sim[..., ~is_self, :],
            rel_pos_ref[..., ~is_self, :],
            params.cross_length_clamp,
            params.softening,
        )
    clamped = int(
        np.sum(np.minimum(sim_len, ref_len)[..., ~is_self] < params.cross_length_clamp)
    )
    err_pos = np.sum(w * pos_err, axis=-1)
    err_vel = np.sum(w * _soft_norm(rel_vel_sim - rel_vel_ref, params.softening), axis=-1)
    return err_pos, err_vel, w, pos_err, clamped


# -- root and COM terms -------------------------------------------------------


def planar(v: np.ndarray, up_index: int) -> np.ndarray:
    keep = [i for i in range(3) if i != up_index]
    return np.asarray(v, dtype=float)[..., keep]


def root_tracking_error(
    pos_sim, quat_sim, vel_sim, omega_sim,
    pos_ref, quat_ref, vel_ref, omega_ref,
    params: RewardParams,
    up_index: int,
) -> np.ndarray:
    """Weighted squared root differences; positions and linear velocities
    drop their up components so height changes (scaled characters) do not
    count as tracking error."""
    dp = planar(pos_sim, up_index) - planar(pos_ref, up_index)
    dv = planar(vel_sim, up_index) - planar(vel_ref, up_index)
    dq = quat.to_rotvec(quat.mul(quat.conj(quat_sim), quat_ref))
    dw = np.asarray(omega_sim, dtype=float) - np.asarray(omega_ref, dtype=float)
    return (
        params.w_p * np.sum(dp * dp, axis=-1)
        + params.w_q * np.sum(dq * dq, axis=-1)
        + params.w_v * np.sum(dv * dv, axis=-1)
        + params.w_omega * np.sum(dw * dw, axis=-1)
    )


def com_tracking_error(
    com_sim, comvel_sim, com_ref, comvel_ref, params: RewardParams, up_index: int
) -> np.ndarray:
    dx = _soft_norm(planar(com_sim, up_index) - planar(com_ref, up_index), params.softening)
    dxd = _soft_norm(planar(comvel_sim, up_index) - planar(comvel_ref, up_index), params.softening)
    return params.w_com_x * dx + params.w_com_xdot * dxd


def link_centers(skeleton: Skeleton, joint_positions: np.ndarray) -> np.ndarray:
    """Geometric center per link: midpoint between a joint and the mean of
    its children; leaf links use the joint position itself."""
    centers = np.array(joint_positions, dtype=float, copy=True)
    for i in range(skeleton.n_joints):
        kids = skeleton.children(i)
        if kids:
            mean_kid = np.mean(joint_positions[..., list(kids), :], axis=-2)
            centers[..., i, :] = 0.5 * (joint_positions[..., i, :] + mean_kid)
    return centers


def center_of_mass(skeleton: Skeleton, joint_positions: np.ndarray) -> np.ndarray:
    m = skeleton.masses()
    c = link_centers(skeleton, joint_positions)
    return np.sum(m[:, None] * c, axis=-2) / np.sum(m)


def combine(err_pos, err_vel, err_root, err_com, params: RewardParams):
    r_pos = np.exp(-params.k1 * err_pos)
    r_vel = np.exp(-params.k2 * err_vel)
    r_root = np.exp(-params.k3 * err_root)
    r_com = np.exp(-params.k4 * err_com)
    return r_pos, r_vel, r_root, r_com, r_pos * r_vel * r_root * r_com


# -- scene-level evaluation ---------------------------------------------------


def check_compatible(sim: Scene, ref: Scene) -> None:
    if sim.marker_table().names != ref.marker_table().names:
        raise ValueError("scenes have different marker layouts")
    if sim.n_frames != ref.n_frames:
        raise ValueError(
            f"scenes have different lengths: {sim.n_frames} vs {ref.n_frames} frames"
        )
    if sim.fps != ref.fps:
        raise ValueError(f"scenes have different frame rates: {sim.fps} vs {ref.fps}")
    sim_chars = tuple(c.name for c in sim.characters)
    ref_chars = tuple(c.name for c in ref.characters)
    if sim_chars != ref_chars:
        raise ValueError(f"scenes have different characters: {sim_chars} vs {ref_chars}")
    for cs, cr in zip(sim.characters, ref.characters):
        if cs.skeleton.up_axis != cr.skeleton.up_axis:
            raise ValueError(f"character {cs.name!r}: up axes differ")


@dataclass
class _CharacterTracks:
    root_pos: np.ndarray
    root_quat: np.ndarray
    root_vel: np.ndarray
    root_omega: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray
    up_index: int


def character_tracks(scene: Scene, name: str) -> _CharacterTracks:
    """Root and COM tracks (with derived velocities) for one character."""
    key = f"char_tracks:{name}"
    if key not in scene._cache:
        c = scene.find_character(name)
        if c is None:
            raise ValueError(f"unknown character {name!r}")
        pos, _ = fk_arrays(c.skeleton, c.root_position, c.root_orientation, c.joint_rotations)
        com = center_of_mass(c.skeleton, pos)
        scene._cache[key] = _CharacterTracks(
            root_pos=c.root_position,
            root_quat=c.root_orientation,
            root_vel=compute_velocities(c.root_position, scene.fps),
            root_omega=compute_angular_velocities(c.root_orientation, scene.fps),
            com=com,
            com_vel=compute_velocities(com, scene.fps),
            up_index=c.skeleton.up_index,
        )
    return scene._cache[key]


def tpose_edge_vectors(scene: Scene, edges: np.ndarray) -> np.ndarray:
    """Frame-0 calibration vector per edge (meaningful for SELF edges)."""
    key = "tpose_positions"
    if key not in scene._cache:
        tables = validate_tpose(scene)
        blocks = [tables[c.name] for c in scene.characters]
        if scene.objects:
            pos0 = scene.marker_positions()[0]
            blocks.append(pos0[sum(len(c.markers) for c in scene.characters):])
        scene._cache[key] = np.concatenate(blocks, axis=0)
    p0 = scene._cache[key]
    return p0[edges[:, 1]] - p0[edges[:, 0]]


def evaluate_frame(
    sim: Scene,
    ref: Scene,
    frame: int,
    params: RewardParams,
    connectivity: Connectivity,
    with_diagnostics: bool = True,
) -> list[RewardBreakdown]:
    """Reward breakdown of one frame for every character.

    Graph terms are shared by all characters; root and COM terms are per
    character.
    """
    g_sim = build_graph(sim, frame, connectivity)
    g_ref = build_graph(ref, frame, connectivity)
    t_sim = tpose_edge_vectors(sim, g_sim.edges)
    t_ref = tpose_edge_vectors(ref, g_ref.edges)
    err_pos, err_vel, w, per_edge, clamped = graph_errors(
        g_sim.rel_positions,
        g_sim.rel_velocities,
        g_ref.rel_positions,
        g_ref.rel_velocities,
        g_sim.classes,
        t_sim,
        t_ref,
        params,
    )
    out = []
    for c in sim.characters:
        ts = character_tracks(sim, c.name)
        tr = character_tracks(ref, c.name)
        err_root = float(
            root_tracking_error(
                ts.root_pos[frame], ts.root_quat[frame], ts.root_vel[frame], ts.root_omega[frame],
                tr.root_pos[frame], tr.root_quat[frame], tr.root_vel[frame], tr.root_omega[frame],
                params, ts.up_index,
            )
        )
        err_com = float(
            com_tracking_error(
                ts.com[frame], ts.com_vel[frame], tr.com[frame], tr.com_vel[frame],
                params, ts.up_index,
            )
        )
        r_pos, r_vel, r_root, r_com, r = combine(
            float(err_pos), float(err_vel), err_root, err_com, params
        )
        out.append(
            RewardBreakdown(
                frame=frame,
                character=c.name,
                err_pos_graph=float(err_pos),
                err_vel_graph=float(err_vel),
                err_root=err_root,
                err_com=err_com,
                r_pos_graph=float(r_pos),
                r_vel_graph=float(r_vel),
                r_root=float(r_root),
                r_com=float(r_com),
                reward=float(r),
                edge_weights=w if with_diagnostics else None,
                edge_errors=per_edge if with_diagnostics else None,
                edge_classes=g_sim.classes if with_diagnostics else None,
                clamped_edges=clamped,
            )
        )
    return out


def evaluate_scene(
    sim: Scene,
    ref: Scene,
    params: RewardParams = RewardParams(),
    connectivity: Optional[Connectivity] = None,
    seed: int = 0,
    with_diagnostics: bool = False,
) -> list[list[RewardBreakdown]]:
    """Evaluate every frame; returns breakdowns[frame][character].

    Connectivity defaults to the reference clip's cached edge sets so both
    motions are measured through the same relationships.
    """
    check_compatible(sim, ref)
    if connectivity is None:
        connectivity = reference_connectivity(ref, seed)
    else:
        check_connectivity(ref, connectivity)
    return [
        evaluate_frame(sim, ref, t, params, connectivity, with_diagnostics)
        for t in range(sim.n_frames)
    ]


# -- joint-space baseline -----------------------------------------------------


@dataclass(frozen=True)
class JointRewardParams:
    """Sensitivities of the joint-space imitation baseline.  Errors are
    per-joint / per-link means, so clip length and joint count do not
    change the scale."""

    k_q: float = 2.0      # mean squared joint rotation difference
    k_qd: float = 0.1     # mean squared link angular velocity difference
    k_e: float = 40.0     # mean squared link position difference
    k_root: float = 10.0  # root tracking error (shared with the graph stack)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_same_skeleton(a: Skeleton, b: Skeleton) -> None:
    """The joint-space baseline compares rotations joint by joint, which is
    meaningless across different rigs (it tolerates different offsets, i.e.
    scaled limbs, but not different topology)."""
    if [j.name for j in a.joints] != [j.name for j in b.joints]:
        raise ValueError("joint-space baseline needs identical joint lists")
    if [j.parent for j in a.joints] != [j.parent for j in b.joints]:
        raise ValueError("joint-space baseline needs identical topology")


def _to_facing(vectors: np.ndarray, root_pos, root_quat, up_index: int, positional: bool):
    """Express per-link vectors in the character's facing frame: yaw removed,
    planar origin under the root (positions only), up = world up."""
    heading = heading_about(np.asarray(root_quat, dtype=float), up_index)
    up = np.zeros(3)
    up[up_index] = 1.0
    unyaw = quat.from_rotvec(-heading[..., None] * up)
    v = np.asarray(vectors, dtype=float)
    if positional:
        origin = np.array(np.asarray(root_pos, dtype=float))
        origin[..., up_index] = 0.0
        v = v - origin[..., None, :]
    return quat.rotate(unyaw[..., None, :], v)


def joint_baseline_errors(
    joint_quats_sim: np.ndarray,   # (..., J-1, 4)
    link_pos_sim: np.ndarray,      # (..., J, 3)
    link_omega_sim: np.ndarray,    # (..., J, 3)
    root_quat_sim: np.ndarray,     # (..., 4)
    joint_quats_ref: np.ndarray,
    link_pos_ref: np.ndarray,
    link_omega_ref: np.ndarray,
    root_quat_ref: np.ndarray,
    up_index: int,
):
    """Per-joint mean errors of the local imitation baseline.

    Link positions and angular velocities compare in each character's own
    facing frame, so the baseline sees body shape and movement but not
    stage placement; that locality is exactly what separates it from the
    graph terms.
    """
    dq = quat.to_rotvec(quat.mul(quat.conj(joint_quats_sim), joint_quats_ref))
    err_q = np.mean(np.sum(dq * dq, axis=-1), axis=-1)
    ps = _to_facing(link_pos_sim, link_pos_sim[..., 0, :], root_quat_sim, up_index, True)
    pr = _to_facing(link_pos_ref, link_pos_ref[..., 0, :], root_quat_ref, up_index, True)
    dx = ps - pr
    err_e = np.mean(np.sum(dx * dx, axis=-1), axis=-1)
    ws = _to_facing(link_omega_sim, None, root_quat_sim, up_index, False)
    wr = _to_facing(link_omega_ref, None, root_quat_ref, up_index, False)
    dw = ws - wr
    err_qd = np.mean(np.sum(dw * dw, axis=-1), axis=-1)
    return err_q, err_qd, err_e


def evaluate_joint_baseline(
    sim: Scene,
    ref: Scene,
    params: RewardParams = RewardParams(),
    jparams: JointRewardParams = JointRewardParams(),
) -> list[dict]:
    """Per-frame, per-character joint-space baseline rewards."""
    check_compatible(sim, ref)
    per_char = {}
    for cs in sim.characters:
        cr = ref.find_character(cs.name)
        check_same_skeleton(cs.skeleton, cr.skeleton)
        ps, rs = fk_arrays(cs.skeleton, cs.root_position, cs.root_orientation, cs.joint_rotations)
        pr, rr = fk_arrays(cr.skeleton, cr.root_position, cr.root_orientation, cr.joint_rotations)
        per_char[cs.name] = (
            cs.joint_rotations, ps, compute_angular_velocities(rs, sim.fps),
            cr.joint_rotations, pr, compute_angular_velocities(rr, ref.fps),
        )
    rows = []
    for t in range(sim.n_frames):
        for cs in sim.characters:
            jqs, ps, ws, jqr, pr, wr = per_char[cs.name]
            cr = ref.find_character(cs.name)
            err_q, err_qd, err_e = joint_baseline_errors(
                jqs[t], ps[t], ws[t], cs.root_orientation[t],
                jqr[t], pr[t], wr[t], cr.root_orientation[t],
                cs.skeleton.up_index,
            )
            tsim = character_tracks(sim, cs.name)
            tref = character_tracks(ref, cs.name)
            err_root = float(
                root_tracking_error(
                    tsim.root_pos[t], tsim.root_quat[t], tsim.root_vel[t], tsim.root_omega[t],
                    tref.root_pos[t], tref.root_quat[t], tref.root_vel[t], tref.root_omega[t],
                    params, tsim.up_index,
                )
            )
            r = float(
                np.exp(-jparams.k_q * err_q)
                * np.exp(-jparams.k_qd * err_qd)
                * np.exp(-jparams.k_e * err_e)
                * np.exp(-jparams.k_root * err_root)
            )
            rows.append(
                {
                    "frame": t,
                    "character": cs.name,
                    "err_q": float(err_q),
                    "err_qd": float(err_qd),
                    "err_e": float(err_e),
                    "err_root": err_root,
                    "reward": r,
                }
            )
    return rows
