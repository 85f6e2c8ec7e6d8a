"""Acceptance gate: each test is one release criterion at its stated
tolerance, so a verbose run reads as a pass/fail checklist.

The optimization contrast (criteria 8 and 9) shares one set of solver runs
on the bundled high-five through a module fixture; everything else is
self-contained and fast.
"""

import dataclasses
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from igmotion.delaunay import perturb_points, tetrahedralize, unique_edges
from igmotion.graph import EdgeClass, build_graph, reference_connectivity
from igmotion.retarget import (
    OptimizerConfig,
    frame_objective,
    optimize_clip,
    scale_character,
)
from igmotion.reward import (
    RewardParams,
    WeightingMode,
    cross_edge_error,
    edge_weights,
    evaluate_scene,
)
from igmotion.scene import save_scene
from igmotion.synth import build_highfive_scene, hand_gap

from conftest import make_pair_scene
from test_delaunay import as_tuples, brute_force_tets, insphere_sign

CONTACT_THRESHOLD = 0.045  # reference hand gap counting as contact (m)
LEGS = ("thigh_l", "shin_l", "foot_l", "toe_l",
        "thigh_r", "shin_r", "foot_r", "toe_r")


# --- criterion 1: weight normalization --------------------------------------


def test_c01_weight_normalization_sums_to_one():
    rng = np.random.default_rng(11)
    t0 = time.monotonic()
    modes = [RewardParams(weighting_mode=m) for m in WeightingMode]
    for i in range(1000):
        n = int(rng.integers(4, 41))
        pts = rng.standard_normal((n, 3)) * rng.uniform(0.2, 3.0)
        edges = unique_edges(tetrahedralize(pts, seed=i))
        moved = pts + rng.standard_normal(pts.shape) * 0.1
        ref_len = np.linalg.norm(pts[edges[:, 1]] - pts[edges[:, 0]], axis=-1)
        sim_len = np.linalg.norm(moved[edges[:, 1]] - moved[edges[:, 0]], axis=-1)
        for params in modes:
            w = edge_weights(sim_len, ref_len, params)
            assert abs(float(np.sum(w)) - 1.0) <= 1e-9
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"1000 graphs took {elapsed:.1f}s"


# --- criterion 2: perfect-imitation fixed point ------------------------------


def test_c02_identical_scene_reward_is_one():
    scene = build_highfive_scene(n_frames=300)
    t0 = time.monotonic()
    rows = evaluate_scene(scene, scene)
    elapsed = time.monotonic() - t0
    for per_frame in rows:
        for b in per_frame:
            assert abs(b.reward - 1.0) <= 1e-12
            for err in (b.err_pos_graph, b.err_vel_graph, b.err_root, b.err_com):
                assert abs(err) <= 1e-12
    assert elapsed < 5.0, f"300-frame evaluation took {elapsed:.1f}s"


# --- criterion 3: scale robustness -------------------------------------------


def test_c03_uniform_scale_keeps_self_edges_zero():
    ref = build_highfive_scene(n_frames=60)
    conn = reference_connectivity(ref)
    for s in (0.5, 0.8, 1.3, 2.0):
        sim = scale_character(ref, "b", s)
        rows = evaluate_scene(sim, ref, connectivity=conn, with_diagnostics=True)
        for per_frame in rows:
            d = per_frame[0]  # edge diagnostics are shared by the frame
            self_mask = d.edge_classes == EdgeClass.SELF
            worst = float(np.max(np.abs(d.edge_errors[self_mask])))
            assert worst <= 1e-9, f"scale {s}: self-edge error {worst:.2e}"


# --- criterion 4: cross-edge swap symmetry ------------------------------------


def test_c04_cross_error_swap_invariant():
    rng = np.random.default_rng(4)
    n = 1_000_000
    rel_sim = rng.standard_normal((n, 3)) * rng.uniform(1e-5, 3.0, (n, 1))
    rel_ref = rng.standard_normal((n, 3)) * rng.uniform(1e-5, 3.0, (n, 1))
    a = cross_edge_error(rel_sim, rel_ref)
    b = cross_edge_error(rel_ref, rel_sim)
    assert float(np.max(np.abs(a - b))) <= 1e-15


# --- criterion 5: Delaunay against the brute-force oracle ---------------------


def test_c05_delaunay_matches_brute_force():
    rng = np.random.default_rng(5)
    t0 = time.monotonic()
    for i in range(100):
        n = int(rng.integers(4, 13))
        pts = rng.standard_normal((n, 3)) * rng.uniform(0.3, 2.0)
        tets = tetrahedralize(pts, seed=i)
        jittered = perturb_points(pts, seed=i)
        for tet in as_tuples(tets):
            a, b, c, d = (jittered[v] for v in tet)
            rest = (k for k in range(n) if k not in tet)
            assert all(insphere_sign(a, b, c, d, jittered[k]) <= 0.0 for k in rest)
        oracle = brute_force_tets(pts, seed=i)
        assert unique_edges(tets).tolist() == unique_edges(np.array(oracle)).tolist()
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


# --- criterion 6: height exclusion --------------------------------------------


def test_c06_vertical_offset_leaves_root_and_com_errors():
    ref = build_highfive_scene(n_frames=40)
    conn = reference_connectivity(ref)
    base = evaluate_scene(ref, ref, connectivity=conn)
    for offset in (0.37, 1.7, -0.55):
        chars = []
        for ch in ref.characters:
            if ch.name == "a":
                rp = ch.root_position.copy()
                rp[:, 1] += offset
                ch = dataclasses.replace(ch, root_position=rp)
            chars.append(ch)
        lifted = dataclasses.replace(ref, characters=tuple(chars))
        rows = evaluate_scene(lifted, ref, connectivity=conn)
        for per_base, per_lift in zip(base, rows):
            for b0, b1 in zip(per_base, per_lift):
                assert abs(b1.err_root - b0.err_root) <= 1e-12
                assert abs(b1.err_com - b0.err_com) <= 1e-12


# --- criterion 7: gradient agreement ------------------------------------------


def test_c07_fd_gradient_matches_internal_estimate():
    ref = make_pair_scene(n_frames=60, wiggle=0.3)
    sim = scale_character(ref, "a", 0.8)
    conn = reference_connectivity(ref)
    D = sum((c.skeleton.n_joints - 1) * 3 for c in sim.characters)
    rng = np.random.default_rng(7)
    deltas = rng.standard_normal((10, D)) * 0.05
    frames = rng.choice(ref.n_frames, size=50, replace=False)
    # probe at the solver's canonical step: the check targets the batched
    # probe wiring, not the truncation error of a second step size
    h = OptimizerConfig().fd_step
    for t in frames:
        obj = frame_objective(sim, ref, int(t), connectivity=conn)
        for x in deltas:
            g = obj.reward_gradient(x)
            probes = np.repeat(x[None], 2 * D, axis=0)
            probes[:D, :] += np.eye(D) * h
            probes[D:, :] -= np.eye(D) * h
            r = obj.reward(probes)
            fd = (r[:D] - r[D:]) / (2.0 * h)
            assert np.allclose(g, fd, rtol=1e-4, atol=1e-12)


# --- criteria 8 and 9: optimization contrast on the bundled scene -------------


@pytest.fixture(scope="module")
def contrast():
    """Weighted, uniform-weight, and joint-baseline solves of the bundled
    high-five with character b at half size, plus contact-frame metrics."""
    ref = build_highfive_scene()
    conn = reference_connectivity(ref)
    gaps = np.array([hand_gap(ref, f) for f in range(ref.n_frames)])
    contact = np.nonzero(gaps < CONTACT_THRESHOLD)[0]
    assert contact.size >= 20
    start = scale_character(ref, "b", 0.5)

    runs = {}
    times = {}
    for key, kwargs in (
        ("weighted", {}),
        ("flat", {"params": RewardParams(k_w=0.0)}),
        ("joint", {"config": OptimizerConfig(objective="joint")}),
    ):
        t0 = time.monotonic()
        runs[key] = optimize_clip(start, ref, connectivity=conn, **kwargs)
        times[key] = time.monotonic() - t0

    def cross_metric(scene):
        rows = evaluate_scene(scene, ref, connectivity=conn, with_diagnostics=True)
        vals = []
        for f in contact:
            d = rows[f][0]
            m = d.edge_classes == EdgeClass.CROSS
            vals.append(float(np.sum(d.edge_weights[m] * d.edge_errors[m])))
        return float(np.mean(vals)), rows

    cross0, _ = cross_metric(start)
    cross_w, rows_w = cross_metric(runs["weighted"].scene)
    _, rows_f = cross_metric(runs["flat"].scene)

    def leg_err(rows, char):
        table = ref.marker_table()
        leg_idx = {i for i, n in enumerate(table.names)
                   if n in {f"{char}:{j}" for j in LEGS}}
        ci = [c.name for c in ref.characters].index(char)
        vals = []
        for f in contact:
            g = build_graph(ref, f, conn)
            d = rows[f][ci]
            errs = [e for (i, j), e in zip(g.edges, d.edge_errors)
                    if i in leg_idx and j in leg_idx]
            vals.append(np.mean(errs))
        return float(np.mean(vals))

    legs_w = 0.5 * (leg_err(rows_w, "a") + leg_err(rows_w, "b"))
    legs_f = 0.5 * (leg_err(rows_f, "a") + leg_err(rows_f, "b"))

    return {
        "contact": contact,
        "runs": runs,
        "times": times,
        "cross0": cross0,
        "cross_w": cross_w,
        "legs_w": legs_w,
        "legs_f": legs_f,
    }


def test_c08_graph_objective_restores_contact(contrast):
    contact = contrast["contact"]
    gap_w = max(hand_gap(contrast["runs"]["weighted"].scene, int(f)) for f in contact)
    gap_j = min(hand_gap(contrast["runs"]["joint"].scene, int(f)) for f in contact)
    ratio = contrast["cross0"] / contrast["cross_w"]
    spent = contrast["times"]["weighted"] + contrast["times"]["joint"]
    assert gap_w < 0.05, f"graph-objective contact gap {gap_w:.4f}"
    assert gap_j > 0.15, f"joint-baseline contact gap {gap_j:.4f}"
    assert ratio >= 5.0, f"cross-error reduction only {ratio:.1f}x"
    assert spent < 600.0, f"solves took {spent:.0f}s"


def test_c09_uniform_weights_regress_noncontact_limbs(contrast):
    legs_w, legs_f = contrast["legs_w"], contrast["legs_f"]
    assert legs_f >= 1.10 * legs_w, (
        f"uniform-weight leg error {legs_f:.4f} vs weighted {legs_w:.4f} "
        f"(ratio {legs_f / legs_w:.2f}, needs >= 1.10)"
    )


# --- criterion 10: CLI determinism across reruns and threads -------------------


def test_c10_cli_outputs_byte_identical(tmp_path):
    scene_path = tmp_path / "scene.json"
    save_scene(build_highfive_scene(n_frames=16), scene_path)
    params_path = tmp_path / "params.json"
    params_path.write_text(json.dumps(
        {"optimizer": {"max_iters": 8, "restarts": 1, "restart_iters": 4}}
    ))

    def run(tag, *argv):
        out = tmp_path / f"{tag}.json"
        cmd = [sys.executable, "-m", "igmotion.cli", *argv, "--out", str(out)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        return out.read_bytes()

    for sub, extra in (
        ("build-graph", []),
        ("eval", []),
        ("retarget", ["--params", str(params_path), "--scale", "0.5",
                      "--character", "b"]),
    ):
        base = [sub, "--ref", str(scene_path), "--seed", "3", *extra]
        first = run(f"{sub}-a", *base, "--threads", "1")
        again = run(f"{sub}-b", *base, "--threads", "1")
        threaded = run(f"{sub}-c", *base, "--threads", "4")
        assert first == again, f"{sub}: rerun differed"
        assert first == threaded, f"{sub}: thread count changed output"
