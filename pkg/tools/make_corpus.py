"""Regenerate the frozen cross-language test-vector corpus.

Scenes come from the bundled synthetic clips; every parity target (graph
dumps, reward rows, observation vectors) is produced through the command
line interface, so other-language consumers compare against exactly what
the CLI ships.  Output is deterministic: fixed seeds, canonical JSON.

Run from the repository root:

    python3 tools/make_corpus.py
"""

import hashlib
import json
import pathlib
import sys

from igmotion.cli import main as cli
from igmotion.scene import save_scene
from igmotion.synth import build_highfive_scene, build_prop_scene
from igmotion.retarget import scale_character

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


def run(argv):
    rc = cli([str(a) for a in argv])
    if rc != 0:
        raise SystemExit(f"corpus command failed ({rc}): {argv}")
    return [str(a) for a in argv]


def main():
    for sub in ("scenes", "graph", "eval", "obs"):
        (CORPUS / sub).mkdir(parents=True, exist_ok=True)

    scenes = CORPUS / "scenes"
    highfive = scenes / "highfive12.json"
    prop = scenes / "prop10.json"
    small_b = scenes / "highfive12_small_b.json"

    hf = build_highfive_scene(n_frames=12)
    save_scene(hf, highfive)
    save_scene(build_prop_scene(n_frames=10), prop)
    save_scene(scale_character(hf, "b", 0.5), small_b)

    kw0 = CORPUS / "eval" / "params_kw0.json"
    kw0.write_text(json.dumps({"reward": {"k_w": 0.0}}) + "\n")

    commands = [
        run(["build-graph", "--ref", highfive,
             "--out", CORPUS / "graph" / "highfive12.json"]),
        run(["build-graph", "--ref", prop,
             "--out", CORPUS / "graph" / "prop10.json"]),
        run(["eval", "--ref", highfive,
             "--out", CORPUS / "eval" / "highfive12_identity.json"]),
        run(["eval", "--ref", highfive, "--eval", small_b,
             "--out", CORPUS / "eval" / "highfive12_small_b.json"]),
        run(["eval", "--ref", highfive, "--eval", small_b,
             "--weighting-mode", "bidir",
             "--out", CORPUS / "eval" / "highfive12_small_b_bidir.json"]),
        run(["eval", "--ref", highfive, "--eval", small_b, "--params", kw0,
             "--out", CORPUS / "eval" / "highfive12_small_b_kw0.json"]),
        run(["eval", "--ref", prop,
             "--out", CORPUS / "eval" / "prop10_identity.json"]),
        run(["eval", "--ref", highfive, "--eval", small_b,
             "--out", CORPUS / "eval" / "scratch.json",
             "--obs-out", CORPUS / "obs" / "highfive12.json",
             "--frames", "0,3,7,11"]),
        run(["eval", "--ref", prop,
             "--out", CORPUS / "eval" / "scratch.json",
             "--obs-out", CORPUS / "obs" / "prop10.json",
             "--character", "a", "--frames", "0,4,9"]),
    ]
    (CORPUS / "eval" / "scratch.json").unlink()

    files = sorted(
        p.relative_to(CORPUS).as_posix()
        for p in CORPUS.rglob("*.json")
        if p.name != "MANIFEST.json"
    )
    manifest = {
        "files": {
            f: hashlib.sha256((CORPUS / f).read_bytes()).hexdigest()
            for f in files
        },
        "commands": [[str(a) for a in c] for c in commands],
    }
    with open(CORPUS / "MANIFEST.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(files)} corpus files under {CORPUS}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
