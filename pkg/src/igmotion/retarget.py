"""Frame-by-frame retargeting by direct ascent on the tracking reward.

The optimizer walks the clip once, front to back.  At each frame it tunes
rotation-vector deltas on every non-root joint of the optimized characters
(roots are kept; retargeting corrects posture, it does not synthesize
locomotion) to maximize the summed log reward, minus a smoothness penalty
against the previous frame's solution and, inside grasp windows, a
quadratic attachment penalty whose weight ramps up until the residual is
within tolerance.

Because frames are solved causally, velocity terms inside the objective use
backward differences against the previously solved frame, applied to both
the candidate and the reference so an already-matching pose scores zero
velocity error.  Frame 0 has no past; it borrows the forward difference
into frame 1 of the unoptimized input instead.  Final reporting always
re-evaluates the assembled clip with the standard central-difference scene
evaluation.

Gradients come from central finite differences computed in one batched pass
through the objective; the line search reuses the same batched path.  No
randomness enters the solve, so results are reproducible by construction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple, Union

import numpy as np

from . import quat
from .core import ScaleSpec, Skeleton, apply_scale, fk_arrays
from .graph import Connectivity, check_connectivity, reference_connectivity
from .reward import (
    JointRewardParams,
    RewardParams,
    center_of_mass,
    character_tracks,
    check_compatible,
    check_same_skeleton,
    com_tracking_error,
    evaluate_joint_baseline,
    evaluate_scene,
    graph_errors,
    joint_baseline_errors,
    root_tracking_error,
    tpose_edge_vectors,
)
from .scene import Scene


class NumericalError(ArithmeticError):
    """The objective stopped being finite.  The clamps should make this
    impossible; kept as a tripwire rather than silently writing garbage."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 50            # ascent iterations per frame (per grasp round)
    init_step: float = 0.05        # first line-search step, radians
    max_step: float = 2.0
    min_step: float = 1e-4
    fd_step: float = 2e-5          # central-difference half step, radians
    delta_bound: float = 1.2       # per-coordinate clamp on deltas, radians
    smooth_weight: float = 0.1
    prior_weight: float = 1e-3     # pullback toward the input pose
    vel_scale: float = 0.0         # velocity sensitivity inside the solve
    softening: float = 2e-3        # norm smoothing inside the solve
    grasp_weight: float = 50.0
    grasp_ramp: float = 8.0        # weight multiplier between grasp rounds
    grasp_rounds: int = 3
    grasp_tolerance: float = 0.005  # meters
    improve_tol: float = 1e-9
    restarts: int = 2              # noise restarts per frame
    restart_scale: float = 0.3     # stddev of the restart shake, radians
    restart_iters: int = 25        # ascent budget per restart
    objective: str = "graph"       # "graph" or "joint"
    characters: Optional[Tuple[str, ...]] = None  # default: every character

    def __post_init__(self):
        if self.objective not in ("graph", "joint"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.max_iters < 1 or self.grasp_rounds < 0:
            raise ValueError("iteration counts must be positive")
        if self.restarts < 0 or self.restart_iters < 1 or self.restart_scale <= 0.0:
            raise ValueError("restart settings out of range")
        if self.vel_scale < 0.0 or self.softening < 0.0 or self.prior_weight < 0.0:
            raise ValueError("vel_scale, softening, prior_weight must be non-negative")
        for name in ("init_step", "fd_step", "delta_bound", "grasp_tolerance"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["characters"] = list(self.characters) if self.characters else None
        return d


@dataclass
class _CharSlot:
    """Bookkeeping for one optimized character."""

    name: str
    skeleton: Skeleton
    base_rots: np.ndarray       # (T, J-1, 4) input joint rotations
    root_pos: np.ndarray        # (T, 3)
    root_quat: np.ndarray       # (T, 4)
    x_slice: slice              # columns of the stacked delta vector
    marker_slice: slice         # rows of the scene marker table
    marker_joints: np.ndarray   # (M,) joint index per marker
    marker_offsets: np.ndarray  # (M, 3)


@dataclass
class _ClipState:
    """Everything shared across frames during one solve."""

    sim: Scene
    ref: Scene
    params: RewardParams
    jparams: JointRewardParams
    config: OptimizerConfig
    connectivity: Connectivity
    slots: list
    sim_P: np.ndarray                 # (T, N, 3) input marker positions
    ref_P: np.ndarray
    ref_com_bwd: dict                 # per char: (T, 3)
    ref_links: dict                   # per char: (link pos, link rot) over T
    ref_omega_bwd: dict               # per char: (T, J, 3)
    # rolling anchors for the backward stencil, updated after each frame
    solved_P: Optional[np.ndarray] = None
    com_anchor: dict = field(default_factory=dict)
    rot_anchor: dict = field(default_factory=dict)
    x_prev: Optional[np.ndarray] = None

    @property
    def fps(self) -> float:
        return self.sim.fps

    @property
    def n_frames(self) -> int:
        return self.sim.n_frames


class FrameObjective:
    """Batched objective for one frame.

    Candidates are (B, D) matrices of stacked rotation-vector deltas in
    slot order.  Everything constant for the frame is precomputed, so
    ``objective`` can run many times cheaply.
    """

    def __init__(self, clip: _ClipState, t: int):
        self.clip = clip
        self.t = t
        self.params = clip.params
        self.cfg = clip.config
        self.grasp_weight = clip.config.grasp_weight
        self.opt_names = {s.name for s in clip.slots}
        # velocity terms are scaled down (off by default) inside the solve:
        # a causal frame-by-frame pass cannot pre-plan its approach, and a
        # displacement of d meters reads as d*fps in velocity space, so even
        # a small velocity weight vetoes exactly the moves retargeting exists
        # to make.  Temporal coherence comes from the smoothness term instead;
        # scoring and reported breakdowns keep full velocity sensitivity.
        # Softening rounds the norm kinks at perfectly matched terms, where
        # finite differences on the exact objective read noise, not slope.
        vs = clip.config.vel_scale
        self.solve_params = dataclasses.replace(
            clip.params, k2=clip.params.k2 * vs,
            w_com_xdot=clip.params.w_com_xdot * vs,
            softening=clip.config.softening,
        )
        self.solve_jparams = dataclasses.replace(
            clip.jparams, k_qd=clip.jparams.k_qd * vs
        )

        if clip.n_frames == 1:
            self.prev_P = None
            self.vel_sign = 0.0
            self.com_anchor = {}
            self.rot_anchor = {}
        elif t == 0:
            self.prev_P = clip.sim_P[1]
            self.vel_sign = -1.0   # v = (next - current) * fps
            self.com_anchor = {k: v for k, v in clip.com_anchor.items()}
            self.rot_anchor = {k: v for k, v in clip.rot_anchor.items()}
        else:
            self.prev_P = clip.solved_P
            self.vel_sign = 1.0    # v = (current - prev) * fps
            self.com_anchor = {k: v for k, v in clip.com_anchor.items()}
            self.rot_anchor = {k: v for k, v in clip.rot_anchor.items()}

        self.base_rows = np.array(clip.sim_P[t], copy=True)
        if self.cfg.objective == "graph":
            self.edges = clip.connectivity.edges[t]
            self.classes = clip.connectivity.classes[t]
            self.tpose_sim = tpose_edge_vectors(clip.sim, self.edges)
            self.tpose_ref = tpose_edge_vectors(clip.ref, self.edges)
            P_ref = clip.ref_P
            self.rel_pos_ref = P_ref[t][self.edges[:, 1]] - P_ref[t][self.edges[:, 0]]
            if self.prev_P is None:
                self.rel_vel_ref = np.zeros_like(self.rel_pos_ref)
            else:
                u = 1 if t == 0 else t
                dref = (P_ref[u] - P_ref[u - 1]) * clip.fps
                self.rel_vel_ref = dref[self.edges[:, 1]] - dref[self.edges[:, 0]]

        # constant pieces: root terms for everyone, COM terms for characters
        # that are not being optimized
        self.err_root = {}
        self.const_logr = {True: 0.0, False: 0.0}
        for ch in clip.sim.characters:
            ts = character_tracks(clip.sim, ch.name)
            tr = character_tracks(clip.ref, ch.name)
            e_root = float(
                root_tracking_error(
                    ts.root_pos[t], ts.root_quat[t], ts.root_vel[t], ts.root_omega[t],
                    tr.root_pos[t], tr.root_quat[t], tr.root_vel[t], tr.root_omega[t],
                    clip.params, ts.up_index,
                )
            )
            self.err_root[ch.name] = e_root
            if self.cfg.objective == "graph":
                for solve, p in ((True, self.solve_params), (False, clip.params)):
                    self.const_logr[solve] -= p.k3 * e_root
                    if ch.name not in self.opt_names:
                        e_com = float(
                            com_tracking_error(
                                ts.com[t], ts.com_vel[t], tr.com[t], tr.com_vel[t],
                                p, ts.up_index,
                            )
                        )
                        self.const_logr[solve] -= p.k4 * e_com

        self.x_prev = clip.x_prev if t > 0 else None
        self.grasps = self._active_grasps()

    # -- scene sites -----------------------------------------------------------

    def _active_grasps(self):
        out = []
        for wi, w in enumerate(self.clip.sim.grasp_windows):
            if w.active(self.t):
                out.append(
                    (
                        wi,
                        self._site_fn(w.hand[0], w.hand[1], None),
                        self._site_fn(w.target[0], w.target[1], w.attach_offset),
                    )
                )
        return out

    def _site_fn(self, entity: str, body: str, offset):
        """Build f(fk) -> world position of an attachment site, batched when
        the owning character is being optimized and constant otherwise."""
        t = self.t
        off = None if offset is None else np.asarray(offset, dtype=float)
        obj = self.clip.sim.find_object(entity)
        if obj is not None:
            p = obj.position[t]
            if off is not None:
                p = p + quat.rotate(obj.orientation[t], off)
            return lambda fk: p
        ch = self.clip.sim.find_character(entity)
        ji = ch.skeleton.body_joint(body)
        if entity not in self.opt_names:
            pos, rot = fk_arrays(
                ch.skeleton,
                ch.root_position[t], ch.root_orientation[t], ch.joint_rotations[t],
            )
            p = pos[ji] if off is None else pos[ji] + quat.rotate(rot[ji], off)
            return lambda fk: p
        if off is None:
            return lambda fk: fk[entity][0][:, ji]
        return lambda fk: fk[entity][0][:, ji] + quat.rotate(fk[entity][1][:, ji], off)

    # -- candidate kinematics ---------------------------------------------------

    def _fk(self, X: np.ndarray) -> dict:
        t = self.t
        out = {}
        for s in self.clip.slots:
            dx = X[:, s.x_slice].reshape(X.shape[0], -1, 3)
            jq = quat.mul(s.base_rots[t][None], quat.from_rotvec(dx))
            out[s.name] = fk_arrays(
                s.skeleton,
                np.broadcast_to(s.root_pos[t], (X.shape[0], 3)),
                np.broadcast_to(s.root_quat[t], (X.shape[0], 4)),
                jq,
            ) + (jq,)
        return out

    def marker_positions(self, fk: dict, B: int) -> np.ndarray:
        P = np.broadcast_to(self.base_rows, (B,) + self.base_rows.shape).copy()
        for s in self.clip.slots:
            pos, rot, _ = fk[s.name]
            block = pos[:, s.marker_joints]
            if np.any(s.marker_offsets):
                block = block + quat.rotate(rot[:, s.marker_joints], s.marker_offsets)
            P[:, s.marker_slice] = block
        return P

    # -- objective ---------------------------------------------------------------

    def components(self, X: np.ndarray, solve: bool = True):
        """(raw log-reward, penalty, grasp residuals) for a candidate batch."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        fk = self._fk(X)
        if self.cfg.objective == "graph":
            raw = self._graph_logr(fk, B, solve)
        else:
            raw = self._joint_logr(X, fk, B, solve)
        pen = np.zeros(B)
        if self.x_prev is not None and self.cfg.smooth_weight > 0.0:
            d = X - self.x_prev[None]
            pen = pen + self.cfg.smooth_weight * np.sum(d * d, axis=-1)
        if self.cfg.prior_weight > 0.0:
            # joints the graph barely sees would otherwise wander freely
            pen = pen + self.cfg.prior_weight * np.sum(X * X, axis=-1)
        residuals = self.grasp_residuals(fk, B)
        for r in residuals:
            pen = pen + self.grasp_weight * r * r
        return raw, pen, residuals

    def grasp_residuals(self, fk: dict, B: int):
        out = []
        for _, hand, target in self.grasps:
            h = np.broadcast_to(hand(fk), (B, 3))
            g = np.broadcast_to(target(fk), (B, 3))
            out.append(np.linalg.norm(h - g, axis=-1))
        return out

    def _graph_logr(self, fk: dict, B: int, solve: bool) -> np.ndarray:
        clip = self.clip
        p = self.solve_params if solve else clip.params
        P = self.marker_positions(fk, B)
        rel_pos = P[:, self.edges[:, 1]] - P[:, self.edges[:, 0]]
        if self.prev_P is None:
            rel_vel = np.zeros_like(rel_pos)
        else:
            dv = self.vel_sign * (P - self.prev_P[None]) * clip.fps
            rel_vel = dv[:, self.edges[:, 1]] - dv[:, self.edges[:, 0]]
        err_pos, err_vel, _, _, _ = graph_errors(
            rel_pos, rel_vel,
            np.broadcast_to(self.rel_pos_ref, rel_pos.shape),
            np.broadcast_to(self.rel_vel_ref, rel_vel.shape),
            self.classes, self.tpose_sim, self.tpose_ref, p,
        )
        n = len(clip.sim.characters)
        raw = -n * (p.k1 * err_pos + p.k2 * err_vel) + self.const_logr[solve]
        for s in clip.slots:
            pos = fk[s.name][0]
            com = center_of_mass(s.skeleton, pos)
            if self.prev_P is None:
                com_vel = np.zeros_like(com)
                ref_vel = np.zeros(3)
            else:
                com_vel = self.vel_sign * (com - self.com_anchor[s.name][None]) * clip.fps
                ref_vel = clip.ref_com_bwd[s.name][self.t]
            tr = character_tracks(clip.ref, s.name)
            e_com = com_tracking_error(
                com, com_vel, tr.com[self.t], ref_vel, p, s.skeleton.up_index
            )
            raw = raw - p.k4 * e_com
        return raw

    def _joint_logr(self, X: np.ndarray, fk: dict, B: int, solve: bool) -> np.ndarray:
        clip = self.clip
        jp = self.solve_jparams if solve else clip.jparams
        t = self.t
        raw = np.zeros(B)
        for s in clip.slots:
            pos, rot, jq = fk[s.name]
            if self.prev_P is None:
                omega = np.zeros_like(pos)
                omega_ref = np.zeros_like(pos[0])
            else:
                anchor = self.rot_anchor[s.name]
                if self.vel_sign > 0.0:
                    rel = quat.mul(rot, quat.conj(anchor[None]))
                else:
                    rel = quat.mul(anchor[None], quat.conj(rot))
                omega = clip.fps * quat.to_rotvec(rel)
                omega_ref = clip.ref_omega_bwd[s.name][t]
            rp, _ = clip.ref_links[s.name]
            rc = clip.ref.find_character(s.name)
            err_q, err_qd, err_e = joint_baseline_errors(
                jq, pos, omega, rot[..., 0, :],
                rc.joint_rotations[t][None], rp[t][None], omega_ref[None],
                rc.root_orientation[t][None],
                s.skeleton.up_index,
            )
            raw = raw - (
                jp.k_q * err_q + jp.k_qd * err_qd + jp.k_e * err_e
                + jp.k_root * self.err_root[s.name]
            )
        return raw

    def objective(self, X: np.ndarray) -> np.ndarray:
        raw, pen, _ = self.components(X, solve=True)
        return raw - pen

    def reward(self, X: np.ndarray) -> np.ndarray:
        """Product of the characters' rewards at full sensitivities;
        penalties excluded."""
        raw, _, _ = self.components(X, solve=False)
        return np.exp(raw)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self._central_diff(self.objective, x)

    def reward_gradient(self, x: np.ndarray) -> np.ndarray:
        """Central-difference gradient of ``reward``: the same estimator the
        ascent runs on, exposed for verification."""
        return self._central_diff(self.reward, x)

    def _central_diff(self, fn, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = self.cfg.fd_step
        D = x.shape[0]
        X = np.tile(x, (2 * D, 1))
        idx = np.arange(D)
        X[2 * idx, idx] += h
        X[2 * idx + 1, idx] -= h
        f = fn(X)
        return (f[0::2] - f[1::2]) / (2.0 * h)


_LINE_SCALES = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.125, 1.0 / 16.0])


def _ascend(obj: FrameObjective, x0: np.ndarray, cfg: OptimizerConfig):
    """Conjugate ascent with a widening/backtracking line search.

    Directions mix the new gradient with the previous direction
    (Polak-Ribiere, clipped at zero so a bad mix falls back to steepest
    ascent).  Accepts only strict improvements, so the per-frame objective
    trace is monotone; the trial step can quadruple in one iteration, which
    matters when a pose must travel far from its warm start."""
    x = np.array(x0, dtype=float, copy=True)
    f = float(obj.objective(x[None])[0])
    step = cfg.init_step
    iters = 0
    g_prev = None
    d_prev = None
    for _ in range(cfg.max_iters):
        iters += 1
        g = obj.gradient(x)
        gn = float(np.linalg.norm(g))
        if gn < 1e-12:
            break
        if g_prev is None:
            d = g
        else:
            beta = max(0.0, float(np.dot(g, g - g_prev) / np.dot(g_prev, g_prev)))
            d = g + beta * d_prev
            if float(np.dot(d, g)) <= 0.0:
                d = g
        dn = float(np.linalg.norm(d))
        scales = np.minimum(step * _LINE_SCALES, cfg.max_step)
        cand = x[None] + (scales / dn)[:, None] * d[None]
        np.clip(cand, -cfg.delta_bound, cfg.delta_bound, out=cand)
        fc = obj.objective(cand)
        k = int(np.argmax(fc))
        if fc[k] > f + cfg.improve_tol:
            # smallest scale that keeps nearly all of the improvement, so a
            # long step never rides along directions the objective is flat in
            good = fc >= f + 0.95 * (fc[k] - f)
            k = int(np.max(np.nonzero(good)[0]))
            x = cand[k]
            f = float(fc[k])
            step = max(float(scales[k]), cfg.min_step)
            g_prev, d_prev = g, d
        else:
            step *= float(_LINE_SCALES[-1])
            g_prev = d_prev = None
            if step < cfg.min_step:
                break
    return x, f, iters


@dataclass
class RetargetResult:
    scene: Scene                      # optimized clip
    characters: Tuple[str, ...]
    deltas: np.ndarray                # (T, D)
    objective: np.ndarray             # (T,) final per-frame objective
    iterations: np.ndarray            # (T,)
    grasp_residuals: list             # per frame: [(window index, meters), ...]
    breakdowns: Optional[list]        # graph evaluation of the result
    baseline_rows: Optional[list]     # joint-space evaluation, if comparable

    def mean_reward(self) -> float:
        rows = [r for fr in self.breakdowns for r in fr]
        return float(np.mean([r.reward for r in rows]))


def _backward_diff(track: np.ndarray, fps: float) -> np.ndarray:
    """Backward differences matching the in-loop stencil; row 0 borrows the
    forward difference."""
    out = np.zeros_like(track)
    if track.shape[0] > 1:
        out[1:] = (track[1:] - track[:-1]) * fps
        out[0] = (track[1] - track[0]) * fps
    return out


def frame_objective(
    sim: Scene,
    ref: Scene,
    frame: int,
    params: RewardParams = RewardParams(),
    config: OptimizerConfig = OptimizerConfig(),
    jparams: JointRewardParams = JointRewardParams(),
    connectivity: Optional[Connectivity] = None,
    seed: int = 0,
) -> FrameObjective:
    """Standalone objective for one frame, with anchors taken from the input
    clip (as if every earlier frame had been accepted unchanged)."""
    clip = _prepare(sim, ref, params, config, jparams, connectivity, seed)
    if frame > 0:
        clip.solved_P = clip.sim_P[frame - 1]
        for s in clip.slots:
            pos, rot = fk_arrays(
                s.skeleton, s.root_pos[frame - 1], s.root_quat[frame - 1],
                s.base_rots[frame - 1],
            )
            clip.com_anchor[s.name] = center_of_mass(s.skeleton, pos)
            clip.rot_anchor[s.name] = rot
        D = sum((s.x_slice.stop - s.x_slice.start) for s in clip.slots)
        clip.x_prev = np.zeros(D)
    return FrameObjective(clip, frame)


def _prepare(
    sim: Scene,
    ref: Scene,
    params: RewardParams,
    config: OptimizerConfig,
    jparams: JointRewardParams,
    connectivity: Optional[Connectivity],
    seed: int,
) -> _ClipState:
    check_compatible(sim, ref)
    if connectivity is None:
        connectivity = reference_connectivity(ref, seed)
    else:
        check_connectivity(ref, connectivity)

    names = config.characters or tuple(c.name for c in sim.characters)
    for n in names:
        if sim.find_character(n) is None:
            raise ValueError(f"unknown character {n!r}")

    starts = {}
    at = 0
    for e in sim.entities():
        starts[e.name] = at
        at += len(e.markers)

    slots = []
    col = 0
    for ch in sim.characters:
        if ch.name not in names:
            continue
        if config.objective == "joint":
            check_same_skeleton(ch.skeleton, ref.find_character(ch.name).skeleton)
        d = (ch.skeleton.n_joints - 1) * 3
        slots.append(
            _CharSlot(
                name=ch.name,
                skeleton=ch.skeleton,
                base_rots=ch.joint_rotations,
                root_pos=ch.root_position,
                root_quat=ch.root_orientation,
                x_slice=slice(col, col + d),
                marker_slice=slice(starts[ch.name], starts[ch.name] + len(ch.markers)),
                marker_joints=np.array([ch.skeleton.body_joint(m.body) for m in ch.markers]),
                marker_offsets=np.array([m.offset for m in ch.markers], dtype=float),
            )
        )
        col += d
    if not slots:
        raise ValueError(f"no characters to optimize among {names!r}")

    ref_com_bwd = {}
    ref_links = {}
    ref_omega_bwd = {}
    for s in slots:
        tr = character_tracks(ref, s.name)
        ref_com_bwd[s.name] = _backward_diff(tr.com, ref.fps)
        rc = ref.find_character(s.name)
        rp, rr = fk_arrays(
            rc.skeleton, rc.root_position, rc.root_orientation, rc.joint_rotations
        )
        ref_links[s.name] = (rp, rr)
        om = np.zeros(rp.shape)
        if ref.n_frames > 1:
            om[1:] = ref.fps * quat.to_rotvec(quat.mul(rr[1:], quat.conj(rr[:-1])))
            om[0] = ref.fps * quat.to_rotvec(quat.mul(rr[1], quat.conj(rr[0])))
        ref_omega_bwd[s.name] = om

    clip = _ClipState(
        sim=sim, ref=ref, params=params, jparams=jparams, config=config,
        connectivity=connectivity, slots=slots,
        sim_P=sim.marker_positions(), ref_P=ref.marker_positions(),
        ref_com_bwd=ref_com_bwd, ref_links=ref_links, ref_omega_bwd=ref_omega_bwd,
    )

    # frame 0's pseudo-forward stencil anchors on the input clip's frame 1
    nxt = min(1, sim.n_frames - 1)
    for s in slots:
        pos, rot = fk_arrays(
            s.skeleton, s.root_pos[nxt], s.root_quat[nxt], s.base_rots[nxt]
        )
        clip.com_anchor[s.name] = center_of_mass(s.skeleton, pos)
        clip.rot_anchor[s.name] = rot
    return clip


def optimize_clip(
    sim: Scene,
    ref: Scene,
    params: RewardParams = RewardParams(),
    config: OptimizerConfig = OptimizerConfig(),
    jparams: JointRewardParams = JointRewardParams(),
    connectivity: Optional[Connectivity] = None,
    seed: int = 0,
) -> RetargetResult:
    """Retarget ``sim`` onto ``ref`` and return the optimized clip.

    ``sim`` holds the cast to pose, usually a scaled copy of the reference
    cast with joints warm-started at the reference rotations; ``ref`` holds
    the motion being tracked.  The two need identical marker layouts.
    """
    clip = _prepare(sim, ref, params, config, jparams, connectivity, seed)
    cfg = config
    T = sim.n_frames
    D = sum(s.x_slice.stop - s.x_slice.start for s in clip.slots)
    deltas = np.zeros((T, D))
    objective = np.zeros(T)
    iterations = np.zeros(T, dtype=int)
    residual_log = []

    x = np.zeros(D)
    for t in range(T):
        obj = FrameObjective(clip, t)
        # carrying the previous solution forward is right while the pose is
        # held, but it outlives its usefulness once the reference moves on;
        # offering decayed seeds lets the solver release stale corrections
        seeds = x[None] * np.array([1.0, 0.6, 0.3, 0.0])[:, None]
        fs = obj.objective(seeds)
        x, f, it = _ascend(obj, seeds[int(np.argmax(fs))], cfg)
        if cfg.restarts > 0:
            # the warm-started ascent parks in the nearest basin; shaking the
            # solution and re-ascending gives each frame a few independent
            # chances at a deeper one, seeded per frame so reruns match
            rng = np.random.default_rng((seed & 0xFFFFFFFF, t))
            rcfg = dataclasses.replace(cfg, max_iters=cfg.restart_iters)
            for _ in range(cfg.restarts):
                shaken = x + rng.standard_normal(D) * cfg.restart_scale
                np.clip(shaken, -cfg.delta_bound, cfg.delta_bound, out=shaken)
                xr, fr, extra = _ascend(obj, shaken, rcfg)
                it += extra
                if fr > f + cfg.improve_tol:
                    x, f = xr, fr
        if obj.grasps:
            for _ in range(cfg.grasp_rounds):
                fk1 = obj._fk(x[None])
                worst = max(float(r[0]) for r in obj.grasp_residuals(fk1, 1))
                if worst <= cfg.grasp_tolerance:
                    break
                obj.grasp_weight *= cfg.grasp_ramp
                x, f, extra = _ascend(obj, x, cfg)
                it += extra
        if not np.isfinite(f):
            raise NumericalError(f"objective became non-finite at frame {t}")
        deltas[t] = x
        objective[t] = f
        iterations[t] = it

        fk1 = obj._fk(x[None])
        residual_log.append(
            [(wi, float(r[0])) for (wi, _, _), r in zip(obj.grasps, obj.grasp_residuals(fk1, 1))]
        )
        # roll the stencil anchors forward onto the accepted pose
        clip.solved_P = obj.marker_positions(fk1, 1)[0]
        for s in clip.slots:
            pos, rot, _ = fk1[s.name]
            clip.com_anchor[s.name] = center_of_mass(s.skeleton, pos)[0]
            clip.rot_anchor[s.name] = rot[0]
        clip.x_prev = x

    chars = []
    for ch in sim.characters:
        slot = next((s for s in clip.slots if s.name == ch.name), None)
        if slot is None:
            chars.append(ch)
            continue
        dx = deltas[:, slot.x_slice].reshape(T, -1, 3)
        new_rots = quat.normalize(quat.mul(ch.joint_rotations, quat.from_rotvec(dx)))
        chars.append(dataclasses.replace(ch, joint_rotations=new_rots))
    out_scene = Scene(
        fps=sim.fps,
        characters=tuple(chars),
        objects=sim.objects,
        grasp_windows=sim.grasp_windows,
    )

    breakdowns = evaluate_scene(out_scene, ref, params, connectivity=connectivity)
    try:
        baseline_rows = evaluate_joint_baseline(out_scene, ref, params, clip.jparams)
    except ValueError:
        baseline_rows = None
    return RetargetResult(
        scene=out_scene,
        characters=tuple(s.name for s in clip.slots),
        deltas=deltas,
        objective=objective,
        iterations=iterations,
        grasp_residuals=residual_log,
        breakdowns=breakdowns,
        baseline_rows=baseline_rows,
    )


def scale_character(scene: Scene, name: str, factors: Union[float, Mapping[str, float], ScaleSpec]) -> Scene:
    """Return a copy of the scene with one character's limbs rescaled.

    Joint rotations are kept, so the scaled character performs the same
    articulation on different proportions.  Marker offsets scale with their
    body.  When every joint shares one factor the root height scales along
    with it, keeping feet at their relative ground clearance; partial scale
    maps leave the root track alone.
    """
    c = scene.find_character(name)
    if c is None:
        raise ValueError(f"unknown character {name!r}")
    if isinstance(factors, ScaleSpec):
        spec = factors
    elif isinstance(factors, Mapping):
        spec = ScaleSpec(dict(factors))
    else:
        spec = ScaleSpec({j.name: float(factors) for j in c.skeleton.joints})
    skel = apply_scale(c.skeleton, spec)
    markers = tuple(
        dataclasses.replace(
            m,
            offset=tuple(
                float(v * spec.factor(c.skeleton.joints[c.skeleton.body_joint(m.body)].name))
                for v in m.offset
            ),
        )
        for m in c.markers
    )
    root_pos = np.array(c.root_position, copy=True)
    per_joint = {spec.factor(j.name) for j in c.skeleton.joints}
    if len(per_joint) == 1:
        root_pos[:, skel.up_index] *= per_joint.pop()
    new_c = dataclasses.replace(
        c, skeleton=skel, markers=markers, root_position=root_pos
    )
    chars = tuple(new_c if ch.name == name else ch for ch in scene.characters)
    return dataclasses.replace(scene, characters=chars)


def grasp_residuals(scene: Scene, frame: int) -> list:
    """Measured hand-to-target distances for every window active at a frame."""
    out = []
    for wi, w in enumerate(scene.grasp_windows):
        if not w.active(frame):
            continue

        def site(entity, body, offset):
            off = None if offset is None else np.asarray(offset, dtype=float)
            obj = scene.find_object(entity)
            if obj is not None:
                p = obj.position[frame]
                return p if off is None else p + quat.rotate(obj.orientation[frame], off)
            ch = scene.find_character(entity)
            ji = ch.skeleton.body_joint(body)
            pos, rot = fk_arrays(
                ch.skeleton,
                ch.root_position[frame], ch.root_orientation[frame],
                ch.joint_rotations[frame],
            )
            return pos[ji] if off is None else pos[ji] + quat.rotate(rot[ji], off)

        h = site(w.hand[0], w.hand[1], None)
        g = site(w.target[0], w.target[1], w.attach_offset)
        out.append((wi, float(np.linalg.norm(h - g))))
    return out
