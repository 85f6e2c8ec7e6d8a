"""Scene container and motion I/O.

A scene bundles one clip of motion: characters (skeleton + marker set +
root/joint tracks), rigid objects (marker set + rigid transform track), a
frame rate, and grasp annotations.  Scenes serialize to a single versioned
JSON document; ``save_scene`` emits a canonical byte stream so identical
scenes produce identical files.

Tracks are frame-major.  Velocities are never stored: they are derived by
central differences on interior frames and one-sided differences at the
clip boundaries, at the scene frame rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import quat
from .core import Joint, ModelError, Pose, Skeleton

FORMAT_NAME = "ig-scene"
FORMAT_VERSION = 1

TPOSE_MIN_MARKER_DISTANCE = 1e-4  # m
_QUAT_NORM_SLACK = 1e-3  # renormalize quietly below, reject above


class SchemaError(ValueError):
    """Raised when a document does not match the scene schema."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class MarkerSpec:
    """A marker rigidly attached to a body, at a constant local offset."""

    name: str
    body: str
    offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def _as_track(arr, n, width, what) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.shape != (n,) + width:
        raise SceneError(f"{what}: expected shape {(n,) + width}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SceneError(f"{what}: values must be finite")
    a.flags.writeable = False
    return a


def _checked_quats(q: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(q, axis=-1)
    off = np.abs(norms - 1.0)
    worst = float(np.max(off)) if off.size else 0.0
    if worst > _QUAT_NORM_SLACK:
        raise SceneError(f"{what}: quaternion norm off by {worst:.3e}")
    if worst > 1e-12:
        q = q / norms[..., None]
        q.flags.writeable = False
    return q


@dataclass(frozen=True)
class Character:
    name: str
    skeleton: Skeleton
    markers: Tuple[MarkerSpec, ...]
    root_position: np.ndarray      # (T, 3)
    root_orientation: np.ndarray   # (T, 4)
    joint_rotations: np.ndarray    # (T, J-1, 4)

    def __post_init__(self):
        J = self.skeleton.n_joints
        T = np.asarray(self.root_position).shape[0]
        object.__setattr__(
            self, "root_position", _as_track(self.root_position, T, (3,), f"{self.name}.root_position")
        )
        rq = _as_track(self.root_orientation, T, (4,), f"{self.name}.root_orientation")
        jq = _as_track(self.joint_rotations, T, (J - 1, 4), f"{self.name}.joint_rotations")
        object.__setattr__(self, "root_orientation", _checked_quats(rq, f"{self.name}.root_orientation"))
        object.__setattr__(self, "joint_rotations", _checked_quats(jq, f"{self.name}.joint_rotations"))
        for m in self.markers:
            self.skeleton.body_joint(m.body)

    @property
    def n_frames(self) -> int:
        return self.root_position.shape[0]

    def pose(self, frame: int) -> Pose:
        return Pose(
            self.root_position[frame],
            self.root_orientation[frame],
            self.joint_rotations[frame],
        )


@dataclass(frozen=True)
class SceneObject:
    """A rigid object with markers given either explicitly or as the eight
    corners of a box (``half_extents``)."""

    name: str
    markers: Tuple[MarkerSpec, ...]
    position: np.ndarray       # (T, 3)
    orientation: np.ndarray    # (T, 4)
    half_extents: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        T = np.asarray(self.position).shape[0]
        object.__setattr__(self, "position", _as_track(self.position, T, (3,), f"{self.name}.position"))
        oq = _as_track(self.orientation, T, (4,), f"{self.name}.orientation")
        object.__setattr__(self, "orientation", _checked_quats(oq, f"{self.name}.orientation"))
        if not self.markers:
            raise SceneError(f"object {self.name!r} has no markers")

    @property
    def n_frames(self) -> int:
        return self.position.shape[0]


@dataclass(frozen=True)
class GraspWindow:
    """Frames during which a hand should stay attached to a target body.

    ``hand`` and ``target`` are (entity, body) pairs; ``attach_offset`` is
    the grab point in the target body frame (body origin when omitted).
    """

    start_frame: int
    end_frame: int
    hand: Tuple[str, str]
    target: Tuple[str, str]
    attach_offset: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame < self.start_frame:
            raise SceneError(
                f"grasp window frames [{self.start_frame}, {self.end_frame}] out of order"
            )
        if tuple(self.hand) == tuple(self.target):
            raise SceneError("grasp hand and target must differ")

    def active(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.end_frame


@dataclass(frozen=True)
class MarkerTable:
    """Flat view of every marker in a scene, characters first then objects,
    in declaration order."""

    names: Tuple[str, ...]
    entities: Tuple[str, ...]         # owning entity per marker
    entity_index: np.ndarray          # (N,) index into characters+objects
    is_object: np.ndarray             # (N,) bool

    @property
    def n_markers(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class Scene:
    fps: float
    characters: Tuple[Character, ...]
    objects: Tuple[SceneObject, ...] = ()
    grasp_windows: Tuple[GraspWindow, ...] = ()

    def __post_init__(self):
        if not (self.fps > 0.0 and np.isfinite(self.fps)):
            raise SceneError(f"fps must be positive, got {self.fps}")
        if not self.characters:
            raise SceneError("scene needs at least one character")
        counts = {e.n_frames for e in self.characters} | {o.n_frames for o in self.objects}
        if len(counts) != 1:
            raise SceneError(f"entities disagree on frame count: {sorted(counts)}")
        if next(iter(counts)) < 1:
            raise SceneError("scene must have at least one frame")
        names = [e.name for e in self.characters] + [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise SceneError("entity names must be unique")
        marker_names = [m.name for e in self.entities() for m in e.markers]
        if len(set(marker_names)) != len(marker_names):
            raise SceneError("marker names must be unique across the scene")
        for w in self.grasp_windows:
            if w.end_frame >= self.n_frames:
                raise SceneError(
                    f"grasp window ends at {w.end_frame} but clip has {self.n_frames} frames"
                )
            for entity, body in (w.hand, w.target):
                ch = self.find_character(entity)
                if ch is not None:
                    ch.skeleton.body_joint(body)
                elif self.find_object(entity) is None:
                    raise SceneError(f"grasp window names unknown entity {entity!r}")
        validate_tpose(self)
        object.__setattr__(self, "_cache", {})

    # -- lookup ------------------------------------------------------------

    def entities(self):
        return tuple(self.characters) + tuple(self.objects)

    def find_character(self, name: str) -> Optional[Character]:
        for c in self.characters:
            if c.name == name:
                return c
        return None

    def find_object(self, name: str) -> Optional[SceneObject]:
        for o in self.objects:
            if o.name == name:
                return o
        return None

    @property
    def n_frames(self) -> int:
        return self.characters[0].n_frames

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    # -- derived marker data ------------------------------------------------

    def marker_table(self) -> MarkerTable:
        if "table" not in self._cache:
            names, entities, idx, isobj = [], [], [], []
            for ei, e in enumerate(self.entities()):
                for m in e.markers:
                    names.append(m.name)
                    entities.append(e.name)
                    idx.append(ei)
                    isobj.append(ei >= len(self.characters))
            self._cache["table"] = MarkerTable(
                tuple(names), tuple(entities), np.array(idx), np.array(isobj, dtype=bool)
            )
        return self._cache["table"]

    def marker_positions(self) -> np.ndarray:
        """World marker positions, (T, N, 3)."""
        if "positions" not in self._cache:
            from .core import fk_arrays  # local import keeps module load light

            blocks = []
            for c in self.characters:
                pos, rot = fk_arrays(
                    c.skeleton, c.root_position, c.root_orientation, c.joint_rotations
                )
                jidx = np.array([c.skeleton.body_joint(m.body) for m in c.markers])
                offs = np.array([m.offset for m in c.markers], dtype=float)
                blocks.append(pos[:, jidx, :] + quat.rotate(rot[:, jidx, :], offs))
            for o in self.objects:
                offs = np.array([m.offset for m in o.markers], dtype=float)
                blocks.append(
                    o.position[:, None, :] + quat.rotate(o.orientation[:, None, :], offs)
                )
            self._cache["positions"] = np.concatenate(blocks, axis=1)
        return self._cache["positions"]

    def marker_velocities(self) -> np.ndarray:
        if "velocities" not in self._cache:
            self._cache["velocities"] = compute_velocities(self.marker_positions(), self.fps)
        return self._cache["velocities"]


def compute_velocities(positions: np.ndarray, fps: float) -> np.ndarray:
    """Differentiate a frame-major track: central differences inside the
    clip, one-sided at the two ends.  Exact for linear motion everywhere
    and for quadratic motion on interior frames."""
    p = np.asarray(positions, dtype=float)
    if p.shape[0] < 2:
        raise ValueError("velocity needs at least two frames")
    v = np.empty_like(p)
    v[1:-1] = (p[2:] - p[:-2]) * (0.5 * fps)
    v[0] = (p[1] - p[0]) * fps
    v[-1] = (p[-1] - p[-2]) * fps
    return v


def compute_angular_velocities(orientations: np.ndarray, fps: float) -> np.ndarray:
    """World-frame angular velocity of an orientation track, (T, ..., 3),
    using the same difference stencil as compute_velocities."""
    q = np.asarray(orientations, dtype=float)
    if q.shape[0] < 2:
        raise ValueError("velocity needs at least two frames")
    w = np.empty(q.shape[:-1] + (3,))

    def rate(q0, q1, dt):
        return quat.to_rotvec(quat.mul(q1, quat.conj(q0))) / dt

    dt = 1.0 / fps
    w[1:-1] = rate(q[:-2], q[2:], 2.0 * dt)
    w[0] = rate(q[0], q[1], dt)
    w[-1] = rate(q[-2], q[-1], dt)
    return w


def validate_tpose(scene: Scene) -> dict:
    """Check the frame-0 calibration pose and return its marker vectors.

    Frame 0 normalizes every within-character edge later on, so any marker
    pair closer than TPOSE_MIN_MARKER_DISTANCE makes the scene unusable.
    Returns {character name: (M, 3) frame-0 marker positions}.
    """
    tables = {}
    offset = 0
    # positions computed directly (not via scene cache) so this can run
    # during Scene construction
    from .core import fk_arrays

    for c in scene.characters:
        pos, rot = fk_arrays(
            c.skeleton, c.root_position[:1], c.root_orientation[:1], c.joint_rotations[:1]
        )
        jidx = np.array([c.skeleton.body_joint(m.body) for m in c.markers])
        offs = np.array([m.offset for m in c.markers], dtype=float)
        p0 = (pos[0, jidx, :] + quat.rotate(rot[0, jidx, :], offs))
        d = np.linalg.norm(p0[:, None, :] - p0[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.size and float(np.min(d)) < TPOSE_MIN_MARKER_DISTANCE:
            i, j = np.unravel_index(int(np.argmin(d)), d.shape)
            raise SceneError(
                f"character {c.name!r}: markers {c.markers[i].name!r} and "
                f"{c.markers[j].name!r} are {float(d[i, j]):.2e} m apart at frame 0; "
                f"the calibration pose cannot normalize their edge"
            )
        tables[c.name] = p0
        offset += len(c.markers)
    return tables


# -- JSON serialization ------------------------------------------------------


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def scene_to_doc(scene: Scene) -> dict:
    chars = []
    for c in scene.characters:
        chars.append(
            {
                "name": c.name,
                "skeleton": {
                    "up_axis": c.skeleton.up_axis,
                    "joints": [
                        {
                            "name": j.name,
                            "parent": j.parent,
                            "offset": _floats(j.offset),
                            "body": j.body,
                            "mass": j.mass,
                        }
                        for j in c.skeleton.joints
                    ],
                },
                "markers": [
                    {"name": m.name, "body": m.body, "offset": _floats(m.offset)}
                    for m in c.markers
                ],
                "root_position": _floats(c.root_position),
                "root_orientation": _floats(c.root_orientation),
                "joint_rotations": _floats(c.joint_rotations),
            }
        )
    objects = []
    for o in scene.objects:
        doc = {
            "name": o.name,
            "position": _floats(o.position),
            "orientation": _floats(o.orientation),
        }
        if o.half_extents is not None:
            doc["half_extents"] = _floats(o.half_extents)
        else:
            doc["markers"] = [
                {"name": m.name, "body": m.body, "offset": _floats(m.offset)}
                for m in o.markers
            ]
        objects.append(doc)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "fps": scene.fps,
        "characters": chars,
        "objects": objects,
        "grasp_windows": [
            {
                "start_frame": w.start_frame,
                "end_frame": w.end_frame,
                "hand": list(w.hand),
                "target": list(w.target),
                "attach_offset": None if w.attach_offset is None else _floats(w.attach_offset),
            }
            for w in scene.grasp_windows
        ],
    }


def _expect(doc, key, types, where):
    if key not in doc:
        raise SchemaError(f"missing key {key!r}", where)
    v = doc[key]
    if not isinstance(v, types):
        raise SchemaError(f"key {key!r} has type {type(v).__name__}", where)
    return v


def _tuple3(v, where):
    if not (isinstance(v, list) and len(v) == 3):
        raise SchemaError("expected a 3-vector", where)
    return tuple(float(x) for x in v)


def scene_from_doc(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    fmt = _expect(doc, "format", str, "")
    if fmt != FORMAT_NAME:
        raise SchemaError(f"unknown format {fmt!r}")
    version = _expect(doc, "version", int, "")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported version {version}")
    fps = float(_expect(doc, "fps", (int, float), ""))

    characters = []
    for ci, cdoc in enumerate(_expect(doc, "characters", list, "")):
        where = f"characters[{ci}]"
        name = _expect(cdoc, "name", str, where)
        sdoc = _expect(cdoc, "skeleton", dict, where)
        joints = []
        for ji, jdoc in enumerate(_expect(sdoc, "joints", list, f"{where}.skeleton")):
            jw = f"{where}.skeleton.joints[{ji}]"
            parent = jdoc.get("parent")
            if parent is not None and not isinstance(parent, int):
                raise SchemaError("parent must be an index or null", jw)
            try:
                joints.append(
                    Joint(
                        _expect(jdoc, "name", str, jw),
                        parent,
                        _tuple3(_expect(jdoc, "offset", list, jw), f"{jw}.offset"),
                        jdoc.get("body", ""),
                        float(jdoc.get("mass", 1.0)),
                    )
                )
            except ModelError as e:
                raise SchemaError(str(e), jw) from None
        try:
            skeleton = Skeleton(tuple(joints), sdoc.get("up_axis", "y"))
        except ModelError as e:
            raise SchemaError(str(e), f"{where}.skeleton") from None
        markers = tuple(
            MarkerSpec(
                _expect(m, "name", str, f"{where}.markers[{mi}]"),
                _expect(m, "body", str, f"{where}.markers[{mi}]"),
                _tuple3(_expect(m, "offset", list, f"{where}.markers[{mi}]"), f"{where}.markers[{mi}].offset"),
            )
            for mi, m in enumerate(_expect(cdoc, "markers", list, where))
        )
        try:
            characters.append(
                Character(
                    name,
                    skeleton,
                    markers,
                    np.asarray(_expect(cdoc, "root_position", list, where), dtype=float),
                    np.asarray(_expect(cdoc, "root_orientation", list, where), dtype=float),
                    np.asarray(_expect(cdoc, "joint_rotations", list, where), dtype=float),
                )
            )
        except (SceneError, ModelError, ValueError) as e:
            raise SchemaError(str(e), where) from None

    objects = []
    for oi, odoc in enumerate(_expect(doc, "objects", list, "") if "objects" in doc else []):
        where = f"objects[{oi}]"
        name = _expect(odoc, "name", str, where)
        if "half_extents" in odoc:
            from .presets import box_markers

            half = _tuple3(odoc["half_extents"], f"{where}.half_extents")
            markers = box_markers(name, half)
        else:
            half = None
            markers = tuple(
                MarkerSpec(
                    _expect(m, "name", str, f"{where}.markers[{mi}]"),
                    m.get("body", ""),
                    _tuple3(_expect(m, "offset", list, f"{where}.markers[{mi}]"), f"{where}.markers[{mi}].offset"),
                )
                for mi, m in enumerate(_expect(odoc, "markers", list, where))
            )
        try:
            objects.append(
                SceneObject(
                    name,
                    markers,
                    np.asarray(_expect(odoc, "position", list, where), dtype=float),
                    np.asarray(_expect(odoc, "orientation", list, where), dtype=float),
                    half,
                )
            )
        except (SceneError, ValueError) as e:
            raise SchemaError(str(e), where) from None

    windows = []
    for wi, wdoc in enumerate(doc.get("grasp_windows", [])):
        where = f"grasp_windows[{wi}]"
        hand = wdoc.get("hand")
        target = wdoc.get("target")
        if not (isinstance(hand, list) and len(hand) == 2):
            raise SchemaError("hand must be [entity, body]", where)
        if not (isinstance(target, list) and len(target) == 2):
            raise SchemaError("target must be [entity, body]", where)
        off = wdoc.get("attach_offset")
        try:
            windows.append(
                GraspWindow(
                    int(_expect(wdoc, "start_frame", int, where)),
                    int(_expect(wdoc, "end_frame", int, where)),
                    (str(hand[0]), str(hand[1])),
                    (str(target[0]), str(target[1])),
                    None if off is None else _tuple3(off, f"{where}.attach_offset"),
                )
            )
        except SceneError as e:
            raise SchemaError(str(e), where) from None

    try:
        return Scene(fps, tuple(characters), tuple(objects), tuple(windows))
    except (SceneError, ModelError) as e:
        raise SchemaError(str(e)) from None


def dumps_canonical(doc: dict) -> str:
    """Canonical JSON: sorted keys, no whitespace, one trailing newline."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        f.write(dumps_canonical(scene_to_doc(scene)))


def load_scene(path) -> Scene:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"not valid JSON: {e}") from None
    return scene_from_doc(doc)


def export_marker_csv(scene: Scene, path) -> None:
    """Write marker tracks as CSV: one row per (frame, marker) with world
    position and velocity."""
    table = scene.marker_table()
    pos = scene.marker_positions()
    vel = scene.marker_velocities()
    with open(path, "w") as f:
        f.write(f"# format=ig-markers version={FORMAT_VERSION} fps={scene.fps!r}\n")
        f.write("frame,marker,px,py,pz,vx,vy,vz\n")
        for t in range(scene.n_frames):
            for m in range(table.n_markers):
                row = [f"{x:.17g}" for x in (*pos[t, m], *vel[t, m])]
                f.write(f"{t},{table.names[m]}," + ",".join(row) + "\n")
