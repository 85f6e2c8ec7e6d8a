"""Reward stack: edge weights, the four error terms, their combination,
and the joint-space baseline it is compared against."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igmotion import quat
from igmotion.graph import EdgeClass, build_graph, reference_connectivity
from igmotion.reward import (
    RewardParams,
    WeightingMode,
    JointRewardParams,
    combine,
    com_tracking_error,
    cross_edge_error,
    center_of_mass,
    edge_weights,
    evaluate_frame,
    evaluate_joint_baseline,
    evaluate_scene,
    graph_errors,
    link_centers,
    root_tracking_error,
    self_edge_error,
    check_same_skeleton,
    tpose_edge_vectors,
)
from igmotion.scene import Character, Scene

from conftest import make_pair_scene, make_character


UP = 1  # y


# --- edge weights ---


def test_equal_ref_lengths_split_evenly():
    w = edge_weights(np.array([1.0, 1.0]), np.array([0.7, 0.7]), RewardParams())
    assert np.allclose(w, [0.5, 0.5], atol=1e-15)


def test_zero_sensitivity_gives_uniform_weights():
    p = RewardParams(k_w=0.0)
    w = edge_weights(np.ones(7), np.linspace(0.1, 3.0, 7), p)
    assert np.allclose(w, 1.0 / 7.0, atol=1e-15)


def test_hand_evaluated_softmax():
    # softmax(-1 * {0, ln 2}) = (1, 1/2) / 1.5 = (2/3, 1/3)
    p = RewardParams(k_w=1.0, weighting_mode=WeightingMode.REF_ONLY)
    w = edge_weights(np.array([9.9, 9.9]), np.array([0.0, np.log(2.0)]), p)
    assert np.allclose(w, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)


def test_ref_only_ignores_sim_lengths():
    p = RewardParams(k_w=3.0)
    ref = np.array([0.2, 0.9, 1.4])
    w1 = edge_weights(np.array([1.0, 1.0, 1.0]), ref, p)
    w2 = edge_weights(np.array([5.0, 0.1, 2.0]), ref, p)
    assert np.allclose(w1, w2, atol=1e-15)


def test_bidirectional_mixes_both_softmaxes():
    p = RewardParams(k_w=2.0, weighting_mode=WeightingMode.BIDIRECTIONAL)
    sim = np.array([0.1, 0.5, 1.1])
    ref = np.array([0.9, 0.2, 0.4])

    def softmax_neg(x, k):
        e = np.exp(-k * (x - x.min()))
        return e / e.sum()

    want = 0.5 * softmax_neg(sim, 2.0) + 0.5 * softmax_neg(ref, 2.0)
    assert np.allclose(edge_weights(sim, ref, p), want, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=40),
    st.floats(min_value=0.0, max_value=20.0),
    st.sampled_from([WeightingMode.REF_ONLY, WeightingMode.BIDIRECTIONAL]),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_weights_always_normalized(n_edges, k_w, mode, seed):
    rng = np.random.default_rng(seed)
    sim = rng.uniform(0.0, 4.0, n_edges)
    ref = rng.uniform(0.0, 4.0, n_edges)
    w = edge_weights(sim, ref, RewardParams(k_w=k_w, weighting_mode=mode))
    assert np.all(w >= 0.0)
    assert abs(float(w.sum()) - 1.0) <= 1e-9


# --- self edges ---


def test_self_edge_identity_is_zero():
    rel = np.array([[0.3, -0.2, 0.5]])
    t = np.array([[0.1, 0.0, 0.4]])
    assert np.allclose(self_edge_error(rel, t, rel, t), 0.0, atol=1e-15)


def test_self_edge_hand_value():
    e = self_edge_error(
        np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]),
        np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]),
    )
    assert np.isclose(float(e), 1.0, atol=1e-15)


def test_self_edge_uniform_scale_cancels():
    rng = np.random.default_rng(31)
    rel_ref = rng.standard_normal((20, 3))
    t_ref = rng.standard_normal((20, 3))
    for s in (0.5, 0.8, 1.3, 2.0):
        e = self_edge_error(s * rel_ref, s * t_ref, rel_ref, t_ref)
        assert np.allclose(e, 0.0, atol=1e-9)


# --- cross edges ---


def test_cross_edge_identity_is_zero():
    rel = np.array([0.4, 0.1, -0.3])
    assert np.isclose(float(cross_edge_error(rel, rel)), 0.0, atol=1e-15)


def test_cross_edge_hand_value():
    e = cross_edge_error(np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert np.isclose(float(e), 0.75, atol=1e-15)


def test_cross_edge_swap_symmetric_exactly():
    rng = np.random.default_rng(32)
    for _ in range(1000):
        a = rng.standard_normal(3)
        b = rng.standard_normal(3)
        assert float(cross_edge_error(a, b)) == float(cross_edge_error(b, a))


def test_cross_edge_clamp_keeps_finite():
    tiny = np.array([1e-12, 0.0, 0.0])
    big = np.array([1.0, 0.0, 0.0])
    e = float(cross_edge_error(tiny, big))
    assert np.isfinite(e)
    # clamped denominator is 1e-6, delta ~= 1
    assert e == pytest.approx(0.5 * (1.0 - 1e-12) / 1e-6 + 0.5 * (1.0 - 1e-12), rel=1e-6)


# --- graph reductions ---


def test_single_cross_edge_weight_one():
    err_pos, err_vel, w, per_edge, clamped = graph_errors(
        np.array([[2.0, 0.0, 0.0]]), np.zeros((1, 3)),
        np.array([[1.0, 0.0, 0.0]]), np.zeros((1, 3)),
        np.array([EdgeClass.CROSS]),
        np.zeros((1, 3)), np.zeros((1, 3)),
        RewardParams(),
    )
    assert np.isclose(float(err_pos), 0.75, atol=1e-15)
    assert np.isclose(float(w.sum()), 1.0)
    assert clamped == 0


def test_velocity_error_single_edge():
    err_pos, err_vel, _, _, _ = graph_errors(
        np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 3.0, 4.0]]),
        np.array([[1.0, 0.0, 0.0]]), np.zeros((1, 3)),
        np.array([EdgeClass.CROSS]),
        np.zeros((1, 3)), np.zeros((1, 3)),
        RewardParams(),
    )
    assert np.isclose(float(err_vel), 5.0, atol=1e-12)


def test_velocity_error_ignores_global_offset():
    # adding one velocity to every node leaves every edge velocity alone
    rng = np.random.default_rng(33)
    sc = make_pair_scene(n_frames=6, wiggle=0.3)
    conn = reference_connectivity(sc)
    g = build_graph(sc, 2, conn)
    offset = rng.standard_normal(3)
    shifted = g.velocities + offset
    rel_shifted = shifted[g.edges[:, 1]] - shifted[g.edges[:, 0]]
    assert np.allclose(rel_shifted, g.rel_velocities, atol=1e-12)


def test_graph_errors_match_brute_force_resummation():
    # independent path: recompute the weighted sums with local formulas
    sim = make_pair_scene(n_frames=6, wiggle=0.25)
    ref = make_pair_scene(n_frames=6, wiggle=0.4)
    conn = reference_connectivity(ref)
    params = RewardParams(k_w=3.0)
    f = 4
    rows = evaluate_frame(sim, ref, f, params, conn)
    gs = build_graph(sim, f, conn)
    gr = build_graph(ref, f, conn)
    ts = tpose_edge_vectors(sim, gs.edges)
    tr = tpose_edge_vectors(ref, gr.edges)

    lr = np.linalg.norm(gr.rel_positions, axis=1)
    ex = np.exp(-params.k_w * (lr - lr.min()))
    w = ex / ex.sum()

    pos_sum = 0.0
    vel_sum = 0.0
    for k, (i, j) in enumerate(gs.edges):
        d_sim = gs.rel_positions[k]
        d_ref = gr.rel_positions[k]
        if gs.classes[k] == EdgeClass.SELF:
            e = np.linalg.norm(
                (d_sim - ts[k]) / np.linalg.norm(ts[k])
                - (d_ref - tr[k]) / np.linalg.norm(tr[k])
            )
        else:
            delta = np.linalg.norm(d_sim - d_ref)
            e = 0.5 * delta / max(np.linalg.norm(d_sim), 1e-6) + 0.5 * delta / max(
                np.linalg.norm(d_ref), 1e-6
            )
        pos_sum += w[k] * e
        vel_sum += w[k] * np.linalg.norm(gs.rel_velocities[k] - gr.rel_velocities[k])

    assert np.isclose(rows[0].err_pos_graph, pos_sum, atol=1e-12)
    assert np.isclose(rows[0].err_vel_graph, vel_sum, atol=1e-12)


# --- root tracking ---


def test_root_identity_zero():
    z = np.zeros(3)
    e = root_tracking_error(z, quat.IDENTITY, z, z, z, quat.IDENTITY, z, z, RewardParams(), UP)
    assert float(e) == 0.0


def test_root_height_excluded():
    z = np.zeros(3)
    raised = np.array([0.0, 0.3, 0.0])
    e = root_tracking_error(raised, quat.IDENTITY, z, z, z, quat.IDENTITY, z, z, RewardParams(), UP)
    assert np.isclose(float(e), 0.0, atol=1e-15)


def test_root_yaw_quarter_turn():
    z = np.zeros(3)
    q = quat.from_axis_angle((0.0, 1.0, 0.0), np.pi / 2)
    e = root_tracking_error(z, q, z, z, z, quat.IDENTITY, z, z, RewardParams(), UP)
    assert np.isclose(float(e), (np.pi / 2) ** 2, atol=1e-12)
    assert np.isclose(float(e), 2.4674, atol=1e-4)


def test_root_terms_weighted():
    z = np.zeros(3)
    p = RewardParams(w_p=2.0, w_v=3.0)
    dp = np.array([0.1, 9.0, 0.2])  # height ignored
    dv = np.array([0.3, -5.0, 0.0])
    e = root_tracking_error(dp, quat.IDENTITY, dv, z, z, quat.IDENTITY, z, z, p, UP)
    want = 2.0 * (0.1**2 + 0.2**2) + 3.0 * 0.3**2
    assert np.isclose(float(e), want, atol=1e-12)


# --- COM tracking ---


def test_com_identity_zero():
    z = np.zeros(3)
    assert float(com_tracking_error(z, z, z, z, RewardParams(), UP)) == 0.0


def test_com_vertical_only_excluded():
    z = np.zeros(3)
    up_only = np.array([0.0, 0.7, 0.0])
    e = com_tracking_error(up_only, z, z, z, RewardParams(), UP)
    assert np.isclose(float(e), 0.0, atol=1e-15)


def test_com_horizontal_hand_value():
    z = np.zeros(3)
    off = np.array([0.3, 0.0, 0.4])
    e = com_tracking_error(off, z, z, z, RewardParams(), UP)
    assert np.isclose(float(e), 0.5, atol=1e-15)


def test_com_is_mass_weighted_mean_of_link_centers():
    from igmotion.presets import humanoid_skeleton
    from igmotion.core import forward_kinematics, Pose

    sk = humanoid_skeleton()
    rng = np.random.default_rng(34)
    rots = quat.from_rotvec(rng.standard_normal((sk.n_joints - 1, 3)) * 0.4)
    pose = Pose(rng.standard_normal(3), quat.from_rotvec(rng.standard_normal(3)), rots)
    pos, _ = forward_kinematics(sk, pose)
    centers = link_centers(sk, pos)
    masses = sk.masses()
    want = (centers * masses[:, None]).sum(axis=0) / masses.sum()
    assert np.allclose(center_of_mass(sk, pos), want, atol=1e-12)


# --- combination ---


def test_all_zero_errors_give_unit_reward():
    r_pos, r_vel, r_root, r_com, r = combine(0.0, 0.0, 0.0, 0.0, RewardParams())
    assert (r_pos, r_vel, r_root, r_com, r) == (1.0, 1.0, 1.0, 1.0, 1.0)


def test_inverse_exp_check():
    p = RewardParams()
    _, _, _, _, r = combine(np.log(2.0) / p.k1, 0.0, 0.0, 0.0, p)
    assert np.isclose(float(r), 0.5, atol=1e-12)


def test_doubling_any_error_decreases_reward():
    p = RewardParams()
    base = (0.1, 0.2, 0.05, 0.3)
    r0 = combine(*base, p)[-1]
    for i in range(4):
        errs = list(base)
        errs[i] *= 2.0
        assert combine(*errs, p)[-1] < r0


def test_reward_is_product_of_subrewards():
    rng = np.random.default_rng(35)
    p = RewardParams()
    for _ in range(50):
        errs = rng.uniform(0.0, 2.0, 4)
        r_pos, r_vel, r_root, r_com, r = combine(*errs, p)
        assert np.isclose(r, r_pos * r_vel * r_root * r_com, atol=1e-12)
        assert 0.0 < r <= 1.0


# --- frame evaluation ---


def test_identical_scenes_reward_one(pair_scene):
    conn = reference_connectivity(pair_scene)
    for f in (0, 4, 7):
        rows = evaluate_frame(pair_scene, pair_scene, f, RewardParams(), conn)
        for row in rows:
            assert row.err_pos_graph == 0.0
            assert row.err_vel_graph == 0.0
            assert row.err_root == 0.0
            assert row.err_com == 0.0
            assert row.reward == 1.0


def test_breakdown_product_decomposition():
    sim = make_pair_scene(n_frames=6, wiggle=0.2)
    ref = make_pair_scene(n_frames=6, wiggle=0.35)
    rows = evaluate_scene(sim, ref)
    for per_frame in rows:
        for b in per_frame:
            assert np.isclose(
                b.reward, b.r_pos_graph * b.r_vel_graph * b.r_root * b.r_com, atol=1e-12
            )


def test_rigid_motion_invariance_of_graph_terms():
    sim = make_pair_scene(n_frames=5, wiggle=0.2)
    ref = make_pair_scene(n_frames=5, wiggle=0.4)
    conn = reference_connectivity(ref)
    rows0 = evaluate_frame(sim, ref, 2, RewardParams(), conn)

    g = quat.from_axis_angle((0, 1, 0), 1.1)
    t = np.array([3.0, 0.0, -2.0])

    def move(sc):
        chars = [
            Character(
                c.name, c.skeleton, c.markers,
                quat.rotate(g, c.root_position) + t,
                quat.mul(g, c.root_orientation),
                c.joint_rotations,
            )
            for c in sc.characters
        ]
        return Scene(sc.fps, tuple(chars))

    conn2 = reference_connectivity(move(ref))
    rows1 = evaluate_frame(move(sim), move(ref), 2, RewardParams(), conn2)
    for r0, r1 in zip(rows0, rows1):
        assert np.isclose(r0.err_pos_graph, r1.err_pos_graph, atol=1e-9)
        assert np.isclose(r0.err_vel_graph, r1.err_vel_graph, atol=1e-9)
        # shared planar translation also leaves root/com terms alone
        assert np.isclose(r0.err_root, r1.err_root, atol=1e-9)
        assert np.isclose(r0.err_com, r1.err_com, atol=1e-9)


def test_uniform_scale_zeroes_every_self_edge():
    from igmotion.retarget import scale_character

    ref = make_pair_scene(n_frames=5, wiggle=0.3, drift=False)
    conn = reference_connectivity(ref)
    for s in (0.5, 0.8, 1.3, 2.0):
        sim = scale_character(ref, "a", s)
        rows = evaluate_frame(sim, ref, 3, RewardParams(), conn)
        b = rows[0]
        self_mask = b.edge_classes == EdgeClass.SELF
        assert np.all(np.abs(b.edge_errors[self_mask]) < 1e-9)


# --- joint baseline ---


def test_baseline_identity_is_one(pair_scene):
    rows = evaluate_joint_baseline(pair_scene, pair_scene)
    assert all(np.isclose(r["reward"], 1.0, atol=1e-12) for r in rows)


def test_baseline_decreases_with_joint_angle():
    ref = make_pair_scene(n_frames=4, wiggle=0.0, drift=False)
    last = None
    for theta in (0.1, 0.3, 0.6, 1.0):
        chars = []
        for c in ref.characters:
            rots = np.array(c.joint_rotations)
            tw = quat.from_axis_angle((0.0, 0.0, 1.0), theta)
            rots[:, 0, :] = quat.mul(rots[:, 0, :], tw[None])
            chars.append(
                Character(c.name, c.skeleton, c.markers, c.root_position, c.root_orientation, rots)
            )
        sim = Scene(ref.fps, tuple(chars))
        r = evaluate_joint_baseline(sim, ref)[0]["reward"]
        assert r < 1.0
        if last is not None:
            assert r < last
        last = r


def test_baseline_blind_where_graph_sees():
    # the discriminative case: pull the pair apart in the evaluated scene
    # while each character still performs its own reference motion.  The
    # local baseline stays at 1; the graph terms fire on the broken
    # between-character edges.  Planar root tracking and COM tracking are
    # disabled on both sides so the contrast isolates the graph terms.
    ref = make_pair_scene(n_frames=6, wiggle=0.3)
    b = ref.characters[1]
    moved = Character(
        b.name, b.skeleton, b.markers,
        b.root_position + np.array([3.0, 0.0, 0.0]),
        b.root_orientation, b.joint_rotations,
    )
    sim = Scene(ref.fps, (ref.characters[0], moved))
    params = RewardParams(w_p=0.0, w_com_x=0.0, w_com_xdot=0.0)

    base = evaluate_joint_baseline(sim, ref, params=params)
    assert all(np.isclose(r["reward"], 1.0, atol=1e-9) for r in base)

    rows = evaluate_scene(sim, ref, params=params)
    ig = np.array([[b.reward for b in per_frame] for per_frame in rows])
    assert np.all(ig < 0.5)


def test_baseline_rejects_different_topology():
    from igmotion.presets import humanoid_skeleton

    with pytest.raises(ValueError):
        check_same_skeleton(humanoid_skeleton(), make_character("x", 2).skeleton)


def test_baseline_accepts_scaled_skeleton():
    from igmotion.retarget import scale_character

    ref = make_pair_scene(n_frames=4)
    sim = scale_character(ref, "a", 0.5)
    check_same_skeleton(sim.characters[0].skeleton, ref.characters[0].skeleton)
    rows = evaluate_joint_baseline(sim, ref)
    assert all(np.isfinite(r["reward"]) for r in rows)
