"""Interaction graphs over scene markers.

Every marker in the scene becomes a node carrying world position and
velocity.  Connectivity comes from the Delaunay tetrahedralization of the
marker cloud: each tetrahedron edge becomes a graph edge, except edges
with both endpoints on the same rigid object, which say nothing about the
interaction and are dropped.  Edges are classified by what they span:

    SELF         both markers on one character
    CROSS        markers on two different characters
    CHAR_OBJECT  at least one marker on a rigid object

Connectivity is usually computed once per frame on the reference clip and
reused for evaluated motion, so both motions are measured through the same
set of spatial relationships.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from .delaunay import tetrahedralize, unique_edges
from .scene import Scene, SceneError


class EdgeClass(IntEnum):
    SELF = 0
    CROSS = 1
    CHAR_OBJECT = 2


@dataclass(frozen=True)
class Connectivity:
    """Per-frame edge sets, bound to a marker layout by name so a cached
    reference connectivity cannot silently apply to a different scene."""

    marker_names: Tuple[str, ...]
    edges: Tuple[np.ndarray, ...]    # (E_t, 2) int arrays, i < j, sorted
    classes: Tuple[np.ndarray, ...]  # (E_t,) EdgeClass values

    @property
    def n_frames(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class InteractionGraph:
    """One frame of the interaction graph."""

    frame: int
    positions: np.ndarray       # (N, 3)
    velocities: np.ndarray      # (N, 3)
    owner: np.ndarray           # (N,) entity index
    edges: np.ndarray           # (E, 2)
    classes: np.ndarray         # (E,)
    rel_positions: np.ndarray   # (E, 3) positions[j] - positions[i]
    rel_velocities: np.ndarray  # (E, 3)

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


def classify_edges(scene: Scene, edges: np.ndarray) -> np.ndarray:
    table = scene.marker_table()
    ei = table.entity_index[edges[:, 0]]
    ej = table.entity_index[edges[:, 1]]
    oi = table.is_object[edges[:, 0]]
    oj = table.is_object[edges[:, 1]]
    classes = np.where(
        oi | oj,
        EdgeClass.CHAR_OBJECT,
        np.where(ei == ej, EdgeClass.SELF, EdgeClass.CROSS),
    )
    return classes.astype(np.int8)


def frame_connectivity(scene: Scene, frame: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Delaunay edges for one frame, with object-internal edges removed."""
    table = scene.marker_table()
    positions = scene.marker_positions()[frame]
    edges = unique_edges(tetrahedralize(positions, seed=seed))
    same_entity = table.entity_index[edges[:, 0]] == table.entity_index[edges[:, 1]]
    object_internal = same_entity & table.is_object[edges[:, 0]]
    edges = edges[~object_internal]
    return edges, classify_edges(scene, edges)


def reference_connectivity(scene: Scene, seed: int = 0) -> Connectivity:
    """Connectivity of every frame of a reference clip."""
    pairs = [frame_connectivity(scene, t, seed) for t in range(scene.n_frames)]
    return Connectivity(
        scene.marker_table().names,
        tuple(p[0] for p in pairs),
        tuple(p[1] for p in pairs),
    )


def check_connectivity(scene: Scene, connectivity: Connectivity) -> None:
    if connectivity.marker_names != scene.marker_table().names:
        raise SceneError("connectivity was built for a different marker layout")
    if connectivity.n_frames != scene.n_frames:
        raise SceneError(
            f"connectivity has {connectivity.n_frames} frames, scene has {scene.n_frames}"
        )


def build_graph(
    scene: Scene,
    frame: int,
    connectivity: Optional[Connectivity] = None,
    seed: int = 0,
) -> InteractionGraph:
    """Interaction graph of one frame.

    With ``connectivity`` given, its edge set for this frame is reused and
    only node features are recomputed; otherwise the frame is
    tetrahedralized on the spot.
    """
    if not (0 <= frame < scene.n_frames):
        raise IndexError(f"frame {frame} outside clip of {scene.n_frames} frames")
    if connectivity is not None:
        check_connectivity(scene, connectivity)
        edges = connectivity.edges[frame]
        classes = connectivity.classes[frame]
    else:
        edges, classes = frame_connectivity(scene, frame, seed)
    positions = scene.marker_positions()[frame]
    velocities = scene.marker_velocities()[frame]
    return InteractionGraph(
        frame=frame,
        positions=positions,
        velocities=velocities,
        owner=scene.marker_table().entity_index,
        edges=edges,
        classes=classes,
        rel_positions=positions[edges[:, 1]] - positions[edges[:, 0]],
        rel_velocities=velocities[edges[:, 1]] - velocities[edges[:, 0]],
    )
