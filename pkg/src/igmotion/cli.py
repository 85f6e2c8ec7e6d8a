"""Command line interface.

Five subcommands cover the pipeline: ``build-graph`` dumps per-frame
connectivity, ``eval`` scores an evaluated scene against a reference (and
can dump observation vectors), ``retarget`` optimizes a scene onto a
reference and writes the result, ``compare`` runs the graph objective and
the joint-space baseline side by side, and ``export`` writes marker tracks
as CSV.

Every JSON output starts with the same header fields: a format name, a
format version, and a ``meta`` object embedding the seed and the parameters
the artifact was produced with.  Documents are canonical JSON (sorted keys,
fixed separators, no timestamps) and never depend on ``--threads``, so the
same invocation reproduces its artifacts byte for byte.  ``--threads``
fans independent per-frame work (or independent runs, for ``compare``)
across a thread pool; the retargeting solve itself is causal in time and
runs single-threaded regardless.

Exit codes: 0 success, 2 malformed input or arguments, 3 numerical
failure, 4 filesystem trouble.  Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import ModelError
from .delaunay import DegenerateInputError
from .graph import Connectivity, EdgeClass, frame_connectivity
from .observe import ObservationSpec, build_observation
from .retarget import NumericalError, OptimizerConfig, optimize_clip, scale_character
from .reward import JointRewardParams, RewardParams, WeightingMode, evaluate_frame, evaluate_scene
from .scene import (
    Scene,
    SceneError,
    SchemaError,
    dumps_canonical,
    export_marker_csv,
    load_scene,
    scene_to_doc,
)

OUTPUT_VERSION = 1


# -- parameter files ----------------------------------------------------------


def _from_doc(cls, doc: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(doc) - known
    if extra:
        raise SchemaError(f"unknown keys {sorted(extra)}", where)
    try:
        return cls(**doc)
    except (TypeError, ValueError) as e:
        raise SchemaError(str(e), where) from None


def load_params(path):
    """Parameter file: optional ``reward``, ``joint``, ``optimizer`` and
    ``observation`` sections, each overriding that group's defaults."""
    if path is None:
        doc = {}
    else:
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"not valid JSON: {e}", str(path)) from None
        if not isinstance(doc, dict):
            raise SchemaError("parameter file must hold an object", str(path))
    extra = set(doc) - {"reward", "joint", "optimizer", "observation"}
    if extra:
        raise SchemaError(f"unknown sections {sorted(extra)}", str(path))
    odoc = dict(doc.get("optimizer", {}))
    if isinstance(odoc.get("characters"), list):
        odoc["characters"] = tuple(odoc["characters"])
    return (
        _from_doc(RewardParams, doc.get("reward", {}), "reward"),
        _from_doc(JointRewardParams, doc.get("joint", {}), "joint"),
        _from_doc(OptimizerConfig, odoc, "optimizer"),
        _from_doc(ObservationSpec, {
            k: tuple(v) if isinstance(v, list) else v
            for k, v in doc.get("observation", {}).items()
        }, "observation"),
    )


def _apply_flags(args, params: RewardParams) -> RewardParams:
    if getattr(args, "weighting_mode", None):
        params = dataclasses.replace(params, weighting_mode=WeightingMode(args.weighting_mode))
    return params


def parse_scale(tokens):
    """``--scale 0.5`` scales every limb; ``--scale thigh_l=1.3 ...`` scales
    the named joints only."""
    named = {}
    bare = None
    for tok in tokens:
        if "=" in tok:
            name, _, val = tok.partition("=")
            name = name.strip()
            if not name or name in named:
                raise SchemaError(f"bad scale token {tok!r}", "--scale")
            named[name] = _positive(val, tok)
        elif bare is None and not named:
            bare = _positive(tok, tok)
        else:
            raise SchemaError("give one uniform factor or joint=factor pairs, not both", "--scale")
    return bare if bare is not None else named


def _positive(text, tok):
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"bad scale token {tok!r}", "--scale") from None
    if not (v > 0.0 and np.isfinite(v)):
        raise SchemaError(f"scale factor must be positive, got {tok!r}", "--scale")
    return v


def parse_frames(text, n_frames: int):
    """Frame selections: ``7``, ``0-10``, or comma-joined mixes of both."""
    if text is None:
        return list(range(n_frames))
    out = set()
    for part in text.split(","):
        a, sep, b = part.partition("-")
        try:
            lo = int(a)
            hi = int(b) if sep else lo
        except ValueError:
            raise SchemaError(f"bad frame selection {part!r}", "--frames") from None
        if not (0 <= lo <= hi < n_frames):
            raise SchemaError(f"frames {part!r} outside clip of {n_frames}", "--frames")
        out.update(range(lo, hi + 1))
    return sorted(out)


# -- shared plumbing ----------------------------------------------------------


def _map_frames(fn, frames, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, frames))
    return [fn(t) for t in frames]


def _connectivity(scene: Scene, seed: int, threads: int) -> Connectivity:
    scene.marker_positions()  # warm the cache before any pool touches it
    pairs = _map_frames(lambda t: frame_connectivity(scene, t, seed), range(scene.n_frames), threads)
    return Connectivity(
        scene.marker_table().names,
        tuple(p[0] for p in pairs),
        tuple(p[1] for p in pairs),
    )


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _header(kind: str, args, params: RewardParams, **extra) -> dict:
    meta = {"seed": args.seed, "reward_params": params.to_dict()}
    meta.update(extra)
    return {"format": kind, "version": OUTPUT_VERSION, "meta": meta}


def _breakdown_row(b) -> dict:
    return {
        "frame": b.frame,
        "character": b.character,
        "err_pos_graph": float(b.err_pos_graph),
        "err_vel_graph": float(b.err_vel_graph),
        "err_root": float(b.err_root),
        "err_com": float(b.err_com),
        "r_pos_graph": float(b.r_pos_graph),
        "r_vel_graph": float(b.r_vel_graph),
        "r_root": float(b.r_root),
        "r_com": float(b.r_com),
        "reward": float(b.reward),
        "clamped_edges": int(b.clamped_edges),
    }


def _load_pair(args):
    ref = load_scene(args.ref)
    sim = load_scene(args.eval) if args.eval else ref
    return sim, ref


# -- subcommands --------------------------------------------------------------


def cmd_build_graph(args) -> int:
    ref = load_scene(args.ref)
    conn = _connectivity(ref, args.seed, args.threads)
    P = ref.marker_positions()
    V = ref.marker_velocities()
    frames = []
    for t in range(ref.n_frames):
        frames.append(
            {
                "edges": conn.edges[t].tolist(),
                "classes": conn.classes[t].tolist(),
                "positions": P[t].tolist(),
                "velocities": V[t].tolist(),
            }
        )
    doc = _header("ig-graph", args, RewardParams(), n_nodes=len(conn.marker_names))
    doc["marker_names"] = list(conn.marker_names)
    doc["frames"] = frames
    _write(args.out, dumps_canonical(doc))
    return 0


def cmd_eval(args) -> int:
    sim, ref = _load_pair(args)
    params, _, _, ospec = load_params(args.params)
    params = _apply_flags(args, params)
    conn = _connectivity(ref, args.seed, args.threads)
    sim.marker_velocities()
    ref.marker_velocities()

    def one(t):
        return evaluate_frame(sim, ref, t, params, conn, with_diagnostics=True)

    first = one(0)  # serial first call fills the per-scene caches
    rest = _map_frames(one, range(1, sim.n_frames), args.threads)
    rows = [_breakdown_row(b) for fr in [first] + rest for b in fr]
    doc = _header("ig-eval", args, params)
    doc["rows"] = rows
    _write(args.out, dumps_canonical(doc))

    if args.obs_out:
        chars = [args.character] if args.character else [c.name for c in sim.characters]
        for name in chars:
            if sim.find_character(name) is None:
                raise SceneError(f"unknown character {name!r}")
        frames = parse_frames(args.frames, sim.n_frames)
        sample = build_observation(sim, ref, frames[0], chars[0], ospec)

        def obs_rows(name):
            def one_obs(t):
                o = build_observation(sim, ref, t, name, ospec)
                return {"frame": t, "character": name, "values": o.vector.tolist()}

            return _map_frames(one_obs, frames, args.threads)

        odoc = _header(
            "ig-observations", args, params,
            layout=[[label, start, size] for label, start, size in sample.layout],
            layout_version=sample.version,
            future_offsets=list(ospec.future_offsets),
        )
        odoc["rows"] = [r for name in chars for r in obs_rows(name)]
        _write(args.obs_out, dumps_canonical(odoc))
    return 0


def _scaled_start(ref: Scene, args) -> Scene:
    sim = load_scene(args.start) if getattr(args, "start", None) else ref
    if not args.scale:
        return sim
    name = args.character
    if name is None:
        if len(sim.characters) != 1:
            raise SchemaError("--scale on a multi-character scene needs --character", "--scale")
        name = sim.characters[0].name
    if sim.find_character(name) is None:
        raise SceneError(f"unknown character {name!r}")
    return scale_character(sim, name, parse_scale(args.scale))


def cmd_retarget(args) -> int:
    ref = load_scene(args.ref)
    params, jparams, config, _ = load_params(args.params)
    params = _apply_flags(args, params)
    if args.objective:
        config = dataclasses.replace(config, objective=args.objective)
    sim = _scaled_start(ref, args)
    conn = _connectivity(ref, args.seed, args.threads)
    result = optimize_clip(sim, ref, params, config, jparams, connectivity=conn, seed=args.seed)

    doc = scene_to_doc(result.scene)
    doc["meta"] = _header("ig-scene", args, params)["meta"]
    doc["meta"]["optimizer"] = config.to_dict()
    _write(args.out, dumps_canonical(doc))

    if args.trace_out:
        trace = _header("ig-trace", args, params, optimizer=config.to_dict())
        trace["frames"] = [
            {
                "objective": float(result.objective[t]),
                "iterations": int(result.iterations[t]),
                "grasp_residuals": [[int(i), float(r)] for i, r in result.grasp_residuals[t]],
            }
            for t in range(result.scene.n_frames)
        ]
        trace["rows"] = [_breakdown_row(b) for fr in result.breakdowns for b in fr]
        trace["mean_reward"] = result.mean_reward()
        _write(args.trace_out, dumps_canonical(trace))
    return 0


def _hand_contact_pairs(ref: Scene, threshold: float):
    """Cross-character pairs of hand markers that close below ``threshold``
    somewhere in the reference, with the frames where they do."""
    P = ref.marker_positions()
    offset = 0
    hands = {}
    for e in ref.entities():
        if ref.find_character(e.name) is not None:
            hands[e.name] = [
                (offset + k, m.name)
                for k, m in enumerate(e.markers)
                if m.body.startswith("hand")
            ]
        offset += len(e.markers)
    names = list(hands)
    pairs = []
    for ai in range(len(names)):
        for bi in range(ai + 1, len(names)):
            for i, iname in hands[names[ai]]:
                for j, jname in hands[names[bi]]:
                    d = np.linalg.norm(P[:, i] - P[:, j], axis=1)
                    frames = np.nonzero(d < threshold)[0]
                    if frames.size:
                        pairs.append(((i, j), (iname, jname), frames))
    return pairs


def _contact_metrics(scene: Scene, pairs) -> dict:
    P = scene.marker_positions()
    per_pair = []
    pooled = []
    for (i, j), _, frames in pairs:
        d = np.linalg.norm(P[frames, i] - P[frames, j], axis=1)
        per_pair.append(float(np.max(d)))
        pooled.extend(d.tolist())
    return {
        "hand_distance_max": max(per_pair) if per_pair else None,
        "hand_distance_mean": float(np.mean(pooled)) if pooled else None,
    }


def _cross_err(scene: Scene, ref: Scene, params, conn, frames):
    if not frames:
        return None
    res = evaluate_scene(scene, ref, params, connectivity=conn, with_diagnostics=True)
    vals = []
    for f in frames:
        d = res[f][0]
        m = d.edge_classes == EdgeClass.CROSS
        vals.append(float(np.sum(d.edge_weights[m] * d.edge_errors[m])))
    return float(np.mean(vals))


def cmd_compare(args) -> int:
    ref = load_scene(args.ref)
    params, jparams, config, _ = load_params(args.params)
    params = _apply_flags(args, params)
    start = _scaled_start(ref, args)
    conn = _connectivity(ref, args.seed, args.threads)
    pairs = _hand_contact_pairs(ref, args.contact_threshold)
    contact_frames = sorted({int(f) for _, _, fs in pairs for f in fs})

    def run(objective):
        cfg = dataclasses.replace(config, objective=objective)
        return optimize_clip(start, ref, params, cfg, jparams, connectivity=conn, seed=args.seed)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=2) as ex:
            fut_g = ex.submit(run, "graph")
            fut_j = ex.submit(run, "joint")
            res_g, res_j = fut_g.result(), fut_j.result()
    else:
        res_g, res_j = run("graph"), run("joint")

    def describe(scene):
        rows = evaluate_scene(scene, ref, params, connectivity=conn)
        entry = {"mean_reward": float(np.mean([b.reward for fr in rows for b in fr]))}
        entry.update(_contact_metrics(scene, pairs))
        entry["cross_err_contact"] = _cross_err(scene, ref, params, conn, contact_frames)
        return entry

    doc = _header(
        "ig-compare", args, params,
        optimizer=config.to_dict(),
        contact_threshold=args.contact_threshold,
    )
    doc["contact"] = {
        "n_frames": len(contact_frames),
        "frames": contact_frames,
        "pairs": [[iname, jname] for _, (iname, jname), _ in pairs],
    }
    doc["runs"] = {
        "input": describe(start),
        "graph": describe(res_g.scene),
        "joint": describe(res_j.scene),
    }
    _write(args.out, dumps_canonical(doc))
    return 0


def cmd_export(args) -> int:
    export_marker_csv(load_scene(args.ref), args.out)
    return 0


# -- wiring -------------------------------------------------------------------


def _common(p, needs_eval=False):
    p.add_argument("--ref", required=True, help="reference scene file")
    if needs_eval:
        p.add_argument("--eval", help="evaluated scene file (defaults to the reference)")
    p.add_argument("--params", help="JSON parameter file")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _scaling(p):
    p.add_argument("--character", help="character to scale / focus on")
    p.add_argument("--scale", nargs="+", default=None, metavar="JOINT=FACTOR",
                   help="uniform factor, or per-joint factors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="igmotion", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="dump per-frame interaction graph connectivity")
    _common(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("eval", help="score an evaluated scene against a reference")
    _common(p, needs_eval=True)
    p.add_argument("--weighting-mode", choices=[m.value for m in WeightingMode])
    p.add_argument("--obs-out", help="also dump observation vectors to this path")
    p.add_argument("--character", help="restrict observation dump to one character")
    p.add_argument("--frames", help="frame selection for the observation dump, e.g. 0,10-20")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retarget", help="optimize a scene onto a reference")
    _common(p)
    p.add_argument("--start", help="starting scene (defaults to the reference)")
    _scaling(p)
    p.add_argument("--objective", choices=["graph", "joint"])
    p.add_argument("--weighting-mode", choices=[m.value for m in WeightingMode])
    p.add_argument("--trace-out", help="write per-frame solve trace and reward rows here")
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("compare", help="graph objective vs joint baseline, one table")
    _common(p)
    _scaling(p)
    p.add_argument("--weighting-mode", choices=[m.value for m in WeightingMode])
    p.add_argument("--contact-threshold", type=float, default=0.045,
                   help="reference hand-pair distance counting as contact (m)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="write marker tracks as CSV")
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return ap


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message}}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        return _fail(2, "arguments", "--threads must be at least 1")
    try:
        return args.func(args)
    except SchemaError as e:
        return _fail(2, "schema", str(e))
    except (NumericalError, DegenerateInputError, FloatingPointError, np.linalg.LinAlgError) as e:
        return _fail(3, "numerical", str(e))
    except (SceneError, ModelError, ValueError) as e:
        return _fail(2, "invalid-input", str(e))
    except OSError as e:
        return _fail(4, "io", str(e))


if __name__ == "__main__":
    sys.exit(main())
