"""Incremental Delaunay tetrahedralization (Bowyer-Watson).

Points are jittered by a deterministic, index-seeded hash (1e-10 m by
default) before any predicate runs, which breaks cospherical and copalanar
ties the same way on every run and in every independent checker that uses
the same jitter.  The triangulation itself follows the classic incremental
scheme: find every tetrahedron whose circumsphere contains the new point,
remove them, and cone the new point to the cavity boundary.

Instead of a bounding super-tetrahedron at large but finite coordinates,
the convex hull is closed by a single symbolic far vertex: every hull face
carries a pseudo-tetrahedron whose "circumsphere" is the outer half-space
of that face.  This carves exactly the cavity an arbitrarily large
super-tetrahedron would, with no mixed-magnitude determinants, so finite
circumspheres never lose real tetrahedra near the hull.

Predicates run on plain floats with hand-expanded determinants.  Real
tetrahedra cache center and squared radius; queries that land within a
guard band of a cached sphere (or hit a badly conditioned one) fall back
to the direct 4x4 determinant test.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np

DEFAULT_PERTURBATION = 1e-10  # m

FAR = -1  # symbolic far vertex id

_GUARD = 1e-7


class DegenerateInputError(ValueError):
    pass


def perturb_points(points: np.ndarray, seed: int = 0, scale: float = DEFAULT_PERTURBATION) -> np.ndarray:
    """Apply the deterministic symbolic-perturbation jitter.

    Offsets depend only on (seed, point index, axis), so any two codepaths
    that agree on indexing see identical coordinates.
    """
    p = np.asarray(points, dtype=float)
    n = p.shape[0]
    idx = np.arange(n, dtype=np.uint64)[:, None] * np.uint64(3) + np.arange(3, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = idx + np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    unit = (z >> np.uint64(11)).astype(float) * (2.0 ** -52) - 1.0  # [-1, 1)
    return p + scale * unit


def _det3(ax, ay, az, bx, by, bz, cx, cy, cz):
    return (
        ax * (by * cz - bz * cy)
        - ay * (bx * cz - bz * cx)
        + az * (bx * cy - by * cx)
    )


def _orient(pa, pb, pc, pd):
    """Positive when pd lies on the (pb-pa) x (pc-pa) normal side."""
    return _det3(
        pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2],
        pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2],
        pd[0] - pa[0], pd[1] - pa[1], pd[2] - pa[2],
    )


def _insphere(pa, pb, pc, pd, pe):
    """4x4 determinant insphere test, rows (p - pe, |p - pe|^2).

    For a positively oriented (pa, pb, pc, pd) the result is negative when
    pe lies strictly inside the circumsphere.
    """
    aex, aey, aez = pa[0] - pe[0], pa[1] - pe[1], pa[2] - pe[2]
    bex, bey, bez = pb[0] - pe[0], pb[1] - pe[1], pb[2] - pe[2]
    cex, cey, cez = pc[0] - pe[0], pc[1] - pe[1], pc[2] - pe[2]
    dex, dey, dez = pd[0] - pe[0], pd[1] - pe[1], pd[2] - pe[2]
    al = aex * aex + aey * aey + aez * aez
    bl = bex * bex + bey * bey + bez * bez
    cl = cex * cex + cey * cey + cez * cez
    dl = dex * dex + dey * dey + dez * dez
    return (
        -al * _det3(bex, bey, bez, cex, cey, cez, dex, dey, dez)
        + bl * _det3(aex, aey, aez, cex, cey, cez, dex, dey, dez)
        - cl * _det3(aex, aey, aez, bex, bey, bez, dex, dey, dez)
        + dl * _det3(aex, aey, aez, bex, bey, bez, cex, cey, cez)
    )


def circumsphere(pa, pb, pc, pd):
    """Center and squared radius of the sphere through four points, or
    None when the four points are too close to coplanar to solve."""
    ax, ay, az = pa
    rows = []
    rhs = []
    for p in (pb, pc, pd):
        rows.append((p[0] - ax, p[1] - ay, p[2] - az))
        rhs.append(0.5 * ((p[0] - ax) ** 2 + (p[1] - ay) ** 2 + (p[2] - az) ** 2))
    (r1x, r1y, r1z), (r2x, r2y, r2z), (r3x, r3y, r3z) = rows
    det = _det3(r1x, r1y, r1z, r2x, r2y, r2z, r3x, r3y, r3z)
    scale = max(
        abs(r1x) + abs(r1y) + abs(r1z),
        abs(r2x) + abs(r2y) + abs(r2z),
        abs(r3x) + abs(r3y) + abs(r3z),
    )
    if abs(det) <= 1e-7 * scale**3:
        return None
    b1, b2, b3 = rhs
    ux = _det3(b1, r1y, r1z, b2, r2y, r2z, b3, r3y, r3z) / det
    uy = _det3(r1x, b1, r1z, r2x, b2, r2z, r3x, b3, r3z) / det
    uz = _det3(r1x, r1y, b1, r2x, r2y, b2, r3x, r3y, b3) / det
    return (ax + ux, ay + uy, az + uz), ux * ux + uy * uy + uz * uz


class _Triangulation:
    def __init__(self, pts):
        self.pts = pts
        self.tets = {}        # tid -> vertex ids (FAR last if present)
        self.spheres = {}     # tid -> (cx, cy, cz, r2) or None
        self.next_id = 0
        self.inner = None     # a point that stays strictly inside the hull

    def add_real(self, a, b, c, d):
        p = self.pts
        if _orient(p[a], p[b], p[c], p[d]) < 0.0:
            c, d = d, c
        tid = self.next_id
        self.next_id += 1
        self.tets[tid] = (a, b, c, d)
        self.spheres[tid] = circumsphere(p[a], p[b], p[c], p[d])
        return tid

    def add_hull(self, a, b, c):
        """Pseudo-tetrahedron (a, b, c, FAR); face stored outward."""
        p = self.pts
        xi = self.inner
        if _orient(p[a], p[b], p[c], xi) > 0.0:
            b, c = c, b
        tid = self.next_id
        self.next_id += 1
        self.tets[tid] = (a, b, c, FAR)
        return tid

    def is_bad(self, tid, e):
        verts = self.tets[tid]
        p = self.pts
        pe = p[e]
        if verts[3] == FAR:
            a, b, c = verts[:3]
            return _orient(p[a], p[b], p[c], pe) > 0.0
        sphere = self.spheres[tid]
        if sphere is not None:
            (cx, cy, cz), r2 = sphere
            dx, dy, dz = pe[0] - cx, pe[1] - cy, pe[2] - cz
            d2 = dx * dx + dy * dy + dz * dz
            if abs(d2 - r2) > _GUARD * (d2 + r2):
                return d2 < r2
        a, b, c, d = verts
        return _insphere(p[a], p[b], p[c], p[d], pe) < 0.0

    def insert(self, e):
        bad = [tid for tid in self.tets if self.is_bad(tid, e)]
        faces = {}
        for tid in bad:
            vs = self.tets[tid]
            for skip in range(4):
                key = frozenset(vs[:skip] + vs[skip + 1:])
                faces[key] = faces.get(key, 0) + 1
        for tid in bad:
            del self.tets[tid]
            self.spheres.pop(tid, None)
        for key, count in faces.items():
            if count != 1:
                continue
            if FAR in key:
                a, b = sorted(v for v in key if v != FAR)
                self.add_hull(a, b, e)
            else:
                a, b, c = sorted(key)
                self.add_real(a, b, c, e)


def _coplanarity_thickness(p: np.ndarray) -> float:
    centered = p - p.mean(axis=0)
    # smallest singular value = extent along the best-fit-plane normal
    return float(np.linalg.svd(centered, compute_uv=False)[-1]) / max(1.0, np.sqrt(len(p)))


def tetrahedralize(
    points: np.ndarray, seed: int = 0, perturbation: float = DEFAULT_PERTURBATION
) -> np.ndarray:
    """Delaunay tetrahedra of a point cloud, as a sorted (K, 4) index array.

    Raises DegenerateInputError for fewer than four points or for a cloud
    so flat that the jitter would dominate its true shape.
    """
    pts_in = np.asarray(points, dtype=float)
    if pts_in.ndim != 2 or pts_in.shape[1] != 3:
        raise ValueError(f"points must be (n, 3), got {pts_in.shape}")
    n = pts_in.shape[0]
    if n < 4:
        raise DegenerateInputError(f"need at least 4 points, got {n}")
    if not np.all(np.isfinite(pts_in)):
        raise DegenerateInputError("points must be finite")
    if _coplanarity_thickness(pts_in) < 10.0 * perturbation:
        raise DegenerateInputError(
            "points are coplanar within the perturbation scale; "
            "a tetrahedralization would be meaningless"
        )
    pts = [tuple(row) for row in perturb_points(pts_in, seed, perturbation)]

    # seed tetrahedron: first four points with genuinely nonzero volume
    i0 = 0
    i1 = next((i for i in range(n) if pts[i] != pts[i0]), None)
    if i1 is None:
        raise DegenerateInputError("all points coincide")
    i2 = None
    for i in range(n):
        if i in (i0, i1):
            continue
        v = np.cross(np.subtract(pts[i1], pts[i0]), np.subtract(pts[i], pts[i0]))
        if float(v @ v) > 0.0:
            i2 = i
            break
    if i2 is None:
        raise DegenerateInputError("all points collinear after perturbation")
    i3 = next(
        (
            i
            for i in range(n)
            if i not in (i0, i1, i2) and _orient(pts[i0], pts[i1], pts[i2], pts[i]) != 0.0
        ),
        None,
    )
    if i3 is None:
        raise DegenerateInputError("all points coplanar after perturbation")

    tri = _Triangulation(pts)
    seedv = (i0, i1, i2, i3)
    tri.inner = tuple(np.mean([pts[i] for i in seedv], axis=0))
    tri.add_real(*seedv)
    for face in combinations(seedv, 3):
        tri.add_hull(*face)
    for e in range(n):
        if e in seedv:
            continue
        tri.insert(e)

    out = sorted(tuple(sorted(vs)) for vs in tri.tets.values() if vs[3] != FAR)
    return np.array(out, dtype=np.int32).reshape(len(out), 4)


def unique_edges(tets: np.ndarray) -> np.ndarray:
    """Distinct vertex pairs of a tetrahedron list, sorted, as (E, 2)."""
    tets = np.asarray(tets)
    if tets.size == 0:
        return np.zeros((0, 2), dtype=np.int32)
    pairs = set()
    for vs in tets:
        a, b, c, d = (int(v) for v in vs)
        pairs.update(
            ((a, b), (a, c), (a, d), (b, c), (b, d), (c, d))
        )
    edges = sorted((min(p), max(p)) for p in pairs)
    return np.array(edges, dtype=np.int32)
