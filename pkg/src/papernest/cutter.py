"""Cut an envelope (outer shell + reversed cavities) with a plane.

Each shell is clipped exactly along the plane; the boundary loops on the
plane are nested into regions and capped once, and both halves reuse the same
cap triangulation with opposite windings, which makes volume conservation and
watertightness structural rather than numerical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from . import geom2d, raster
from .approximate import Papermesh
from .errors import ContainmentError, StitchError
from .hierarchy import HierarchyTree
from .mesh import TriMesh, center_of_mass, points_inside
from .viewpoint import ViewRanking

PLANE_TOL_FRACTION = 1e-9


@dataclass(frozen=True)
class CutPlane:
    """Plane through the inner level's center of mass, normal to the view."""

    origin: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        length = np.linalg.norm(n)
        if abs(length - 1.0) > 1e-9:
            if length <= 0:
                raise ValueError("plane normal must be nonzero")
            n = n / length
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "normal", n)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.origin) @ self.normal


@dataclass(frozen=True)
class Envelope:
    """Outer shell plus cavity shells with reversed (inward) winding."""

    outer: TriMesh
    cavities: tuple[TriMesh, ...]

    @property
    def shells(self) -> list[TriMesh]:
        return [self.outer, *self.cavities]

    @property
    def volume(self) -> float:
        from .mesh import signed_volume

        return float(sum(signed_volume(s) for s in self.shells))

    @property
    def bounding_diagonal(self) -> float:
        return self.outer.bounding_diagonal


def make_envelope(outer: Union[Papermesh, TriMesh], inners: Sequence[Union[Papermesh, TriMesh]]) -> Envelope:
    """Build the difference region between an outer mesh and its inners.

    Because the hierarchy guarantees strictly disjoint nested surfaces, the
    boolean difference reduces to keeping the outer surface and duplicating
    each inner surface with reversed winding.
    """
    outer_mesh = outer.mesh if isinstance(outer, Papermesh) else outer
    cavities = []
    for inner in inners:
        m = inner.mesh if isinstance(inner, Papermesh) else inner
        if not points_inside(outer_mesh, m.vertices).all():
            raise ContainmentError("an inner vertex lies outside the outer shell")
        cavities.append(m.reversed())
    return Envelope(outer=outer_mesh, cavities=tuple(cavities))


# ---------------------------------------------------------------------------
# Clipping
# ---------------------------------------------------------------------------

class _HalfBuilder:
    """Accumulates vertices and faces of one output half."""

    def __init__(self):
        self.coords: list[np.ndarray] = []
        self.index: dict[tuple, int] = {}
        self.faces: list[tuple[int, int, int]] = []

    def vid(self, key: tuple, coord: np.ndarray) -> int:
        if key not in self.index:
            self.index[key] = len(self.coords)
            self.coords.append(coord)
        return self.index[key]

    def mesh(self) -> TriMesh:
        return TriMesh(np.asarray(self.coords), np.asarray(self.faces, dtype=np.int64))


def _clip_shells(shells: Sequence[TriMesh], plane: CutPlane, tol: float):
    """Split every shell along the plane.

    Returns (pos builder, neg builder, boundary segments, plane-point coords)
    where segments are (key_a, key_b) pairs oriented for the positive half and
    keys identify shared on-plane vertices exactly.
    """
    pos = _HalfBuilder()
    neg = _HalfBuilder()
    segments: list[tuple[tuple, tuple]] = []
    plane_coords: dict[tuple, np.ndarray] = {}

    for si, shell in enumerate(shells):
        v = shell.vertices
        d = plane.signed_distance(v)
        sign = np.zeros(len(v), dtype=np.int8)
        sign[d > tol] = 1
        sign[d < -tol] = -1

        def vkey(idx: int) -> tuple:
            return ("v", si, int(idx))

        def ekey(a: int, b: int) -> tuple:
            return ("e", si, min(int(a), int(b)), max(int(a), int(b)))

        def cut_point(a: int, b: int) -> np.ndarray:
            da, db = d[a], d[b]
            t = da / (da - db)
            return v[a] + t * (v[b] - v[a])

        for face in shell.faces:
            s = sign[face]
            if (s >= 0).all():
                tri = [pos.vid(vkey(i), v[i]) for i in face]
                pos.faces.append(tuple(tri))
                if (s == 0).sum() == 2 and not (s == 0).all():
                    # face touches the plane along an original edge; the edge
                    # bounds both halves, oriented as this face traverses it
                    for k in range(3):
                        a, b = int(face[k]), int(face[(k + 1) % 3])
                        if sign[a] == 0 and sign[b] == 0:
                            plane_coords[vkey(a)] = v[a]
                            plane_coords[vkey(b)] = v[b]
                            segments.append((vkey(a), vkey(b)))
                continue
            if (s <= 0).all():
                tri = [neg.vid(vkey(i), v[i]) for i in face]
                neg.faces.append(tuple(tri))
                continue
            # mixed: walk the triangle boundary, splitting crossing edges
            poly: list[tuple[tuple, np.ndarray, int]] = []  # (key, coord, sign)
            for k in range(3):
                a, b = int(face[k]), int(face[(k + 1) % 3])
                poly.append((vkey(a), v[a], int(sign[a])))
                if sign[a] * sign[b] < 0:
                    key = ekey(a, b)
                    if key not in plane_coords:
                        plane_coords[key] = cut_point(a, b)
                    poly.append((key, plane_coords[key], 0))
            for key, coord, s_i in poly:
                if s_i == 0:
                    plane_coords[key] = coord
            for side_sign, builder in ((1, pos), (-1, neg)):
                sp = [p for p in poly if p[2] == 0 or p[2] == side_sign]
                if len(sp) < 3:
                    continue
                base = builder.vid(sp[0][0], sp[0][1])
                for k in range(1, len(sp) - 1):
                    i1 = builder.vid(sp[k][0], sp[k][1])
                    i2 = builder.vid(sp[k + 1][0], sp[k + 1][1])
                    builder.faces.append((base, i1, i2))
                if side_sign == 1:
                    # the cut chord is the unique on-plane adjacency of the
                    # positive polygon; its order there orients the boundary
                    n_sp = len(sp)
                    for k in range(n_sp):
                        if sp[k][2] == 0 and sp[(k + 1) % n_sp][2] == 0:
                            segments.append((sp[k][0], sp[(k + 1) % n_sp][0]))
                            break
    # tangential contacts contribute an on-plane edge from both sides; those
    # opposite-direction duplicates are interior, not boundary
    seen = {}
    cleaned: list[tuple[tuple, tuple]] = []
    for a, b in segments:
        if (b, a) in seen:
            seen.pop((b, a))
        else:
            seen[(a, b)] = True
    cleaned = [seg for seg in segments if seg in seen]
    return pos, neg, cleaned, plane_coords


def _chain_loops(segments, plane_coords) -> list[list[tuple]]:
    succ: dict[tuple, tuple] = {}
    for a, b in segments:
        if a == b:
            continue
        if a in succ:
            raise StitchError("ambiguous boundary chaining at the cut plane")
        succ[a] = b
    loops: list[list[tuple]] = []
    visited: set[tuple] = set()
    for start in sorted(succ):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = succ.get(start)
        while cur is not None and cur != start:
            if cur in visited:
                raise StitchError("boundary loop does not close")
            loop.append(cur)
            visited.add(cur)
            cur = succ.get(cur)
        if cur != start or len(loop) < 3:
            raise StitchError("open boundary chain at the cut plane")
        loops.append(loop)
    return loops


def clip_and_stitch(env: Envelope, plane: CutPlane) -> tuple[TriMesh, TriMesh]:
    """Clip the envelope by the plane and close both halves with caps.

    Returns ``(positive_half, negative_half)``. Boundary loops are nested in
    plane coordinates; each even-depth loop is capped with its immediate
    children as holes (advancing-front zipper for the single-hole annulus,
    bridge + ear clipping otherwise). Both halves share one cap triangulation
    with opposite windings.
    """
    tol = PLANE_TOL_FRACTION * max(env.bounding_diagonal, 1.0)
    pos, neg, segments, plane_coords = _clip_shells(env.shells, plane, tol)
    loops = _chain_loops(segments, plane_coords)

    if loops:
        t1, t2 = raster.orthonormal_frame(plane.normal)

        def to2d(key):
            p = plane_coords[key]
            rel = p - plane.origin
            return np.array([rel @ t1, rel @ t2])

        loops2d = [np.array([to2d(k) for k in loop]) for loop in loops]
        # normalize: every loop CCW in (t1, t2) coordinates
        for i, loop in enumerate(loops):
            if geom2d.polygon_area(loops2d[i]) < 0:
                loops[i] = loop[::-1]
                loops2d[i] = loops2d[i][::-1]
        depth = [0] * len(loops)
        for i in range(len(loops)):
            for j in range(len(loops)):
                if i != j and geom2d.point_in_polygon(loops2d[i][0], loops2d[j]):
                    depth[i] += 1
        parents: dict[int, list[int]] = {}
        for i, dep in enumerate(depth):
            if dep % 2 == 1:
                cands = [
                    j
                    for j in range(len(loops))
                    if depth[j] == dep - 1 and geom2d.point_in_polygon(loops2d[i][0], loops2d[j])
                ]
                if len(cands) != 1:
                    raise StitchError("cavity loop is not strictly inside exactly one outer loop")
                parents.setdefault(cands[0], []).append(i)

        cap_tris: list[tuple[tuple, tuple, tuple]] = []
        for i, dep in enumerate(depth):
            if dep % 2 == 1:
                continue
            holes = parents.get(i, [])
            if len(holes) == 1:
                h = holes[0]
                tris = geom2d.zipper_annulus(
                    loops2d[i], list(loops[i]), loops2d[h], list(loops[h])
                )
                cap_tris.extend(tris)
            else:
                # triangulate_with_holes expects CW holes
                hole_data = [(loops2d[h][::-1], list(loops[h])[::-1]) for h in holes]
                tris = geom2d.triangulate_with_holes(loops2d[i], list(loops[i]), hole_data)
                cap_tris.extend(tris)

        # caps: CCW in plane coords has normal +n -> outward for the negative
        # half, flipped for the positive half
        for ka, kb, kc in cap_tris:
            ia, ib, ic = (neg.vid(k, plane_coords[k]) for k in (ka, kb, kc))
            neg.faces.append((ia, ib, ic))
            ia, ib, ic = (pos.vid(k, plane_coords[k]) for k in (ka, kb, kc))
            pos.faces.append((ia, ic, ib))

    return pos.mesh(), neg.mesh()


# ---------------------------------------------------------------------------
# Cut planning for a hierarchy level
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutResult:
    """The two halves a cut node was split into."""

    node_id: str
    plane: CutPlane
    half_pos: TriMesh
    half_neg: TriMesh

    @property
    def halves(self) -> tuple[TriMesh, TriMesh]:
        return self.half_pos, self.half_neg


@dataclass(frozen=True)
class LevelCutPlan:
    """The ranked cut planes for one level (origin fixed, normals ranked)."""

    origin: np.ndarray
    ranking: ViewRanking

    @property
    def plane(self) -> CutPlane:
        return CutPlane(self.origin, self.ranking.best.direction)

    def iter_planes(self) -> Iterator[CutPlane]:
        for sample in self.ranking:
            yield CutPlane(self.origin, sample.direction)


def plan_cut_for_level(tree: HierarchyTree, level: int, ranking: ViewRanking) -> LevelCutPlan:
    """Cut plane for the parents of ``level``: through the level's joint
    center of mass, normal to the ranked view directions."""
    if level < 1:
        raise ValueError("cut planes are defined for levels >= 1")
    node_ids = tree.levels().get(level, [])
    meshes = [p.mesh for nid in node_ids for p in tree.nodes[nid].papermeshes]
    origin = center_of_mass(meshes)
    return LevelCutPlan(origin=origin, ranking=ranking)
