"""Triangle-mesh core: representation, file IO, topology and containment.

A :class:`TriMesh` is an immutable indexed face set. Adjacency and derived
quantities are built lazily and cached; all queries are read-only, so meshes
can be shared freely across threads.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from . import intersect
from .errors import DegenerateError, ParseError, TopologyError

WELD_FRACTION = 1e-6          # of bounding diagonal, used by load_mesh
ON_SURFACE_FRACTION = 1e-9    # of bounding diagonal, point-on-surface tolerance
EDGE_GRAZE_EPS = 1e-9         # barycentric margin considered a grazing ray hit
EDGE_CONTACT_EPS = 1e-9       # absolute segment-segment contact distance
MAX_RAY_RETRIES = 8

# Fixed, deterministic ray directions for the parity test (index 0 is the
# default, the rest are fallbacks after grazing hits).
_RAY_DIRS = np.random.default_rng(20240917).normal(size=(MAX_RAY_RETRIES + 1, 3))
_RAY_DIRS /= np.linalg.norm(_RAY_DIRS, axis=1, keepdims=True)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; ``lo <= hi`` componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if (lo > hi).any():
            raise DegenerateError("Aabb with lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) * 0.5

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def overlaps(self, other: "Aabb", pad: float = 0.0) -> bool:
        return bool(((self.lo - pad) <= other.hi).all() and ((other.lo - pad) <= self.hi).all())


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle surface with consistent outward CCW winding.

    ``vertices`` is (V, 3) float64 and ``faces`` is (F, 3) int32. Arrays are
    frozen after construction.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3:
            raise TopologyError("vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise TopologyError("faces must be (F, 3)")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise TopologyError("face references vertex index out of range")
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])).any():
                raise TopologyError("face references a repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    # -- basic counts -----------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    # -- topology ---------------------------------------------------------
    @cached_property
    def _edge_data(self):
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        edges, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        face_edges = inverse.reshape(3, -1).T  # (F, 3) edge id per corner
        return edges, face_edges, counts, directed

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, shape (E, 2)."""
        return self._edge_data[0]

    @property
    def face_edges(self) -> np.ndarray:
        """Edge id of each face corner edge (v_k, v_{k+1}), shape (F, 3)."""
        return self._edge_data[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def edge_faces(self) -> list[np.ndarray]:
        """Face ids incident to each edge."""
        flat = self.face_edges.ravel()
        fids = np.repeat(np.arange(self.n_faces), 3)
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        fids = fids[order]
        starts = np.searchsorted(flat, np.arange(len(self.edges)))
        ends = np.searchsorted(flat, np.arange(len(self.edges)), side="right")
        return [fids[s:e] for s, e in zip(starts, ends)]

    @cached_property
    def is_closed(self) -> bool:
        """Every undirected edge shared by exactly two faces."""
        return bool(self.n_faces > 0 and (self.edge_counts == 2).all())

    @cached_property
    def is_edge_manifold(self) -> bool:
        return bool((self.edge_counts <= 2).all())

    @cached_property
    def is_oriented(self) -> bool:
        """Each shared edge is traversed in opposite directions by its faces."""
        directed = self._edge_data[3]
        _, counts = np.unique(directed, axis=0, return_counts=True)
        return bool((counts == 1).all())

    @property
    def is_watertight(self) -> bool:
        return self.is_closed and self.is_oriented

    # -- geometry ---------------------------------------------------------
    @cached_property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @cached_property
    def face_cross(self) -> np.ndarray:
        t = self.triangles
        return np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals; zero vector for degenerate faces."""
        c = self.face_cross
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return np.where(n > 0, c / np.where(n > 0, n, 1.0), 0.0)

    @cached_property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def aabb(self) -> Aabb:
        if not len(self.vertices):
            raise DegenerateError("empty mesh has no bounds")
        return Aabb(self.vertices.min(axis=0), self.vertices.max(axis=0))

    @property
    def bounding_diagonal(self) -> float:
        return self.aabb.diagonal

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unit where defined)."""
        vn = np.zeros_like(self.vertices)
        np.add.at(vn, self.faces[:, 0], self.face_cross)
        np.add.at(vn, self.faces[:, 1], self.face_cross)
        np.add.at(vn, self.faces[:, 2], self.face_cross)
        n = np.linalg.norm(vn, axis=1, keepdims=True)
        return np.where(n > 0, vn / np.where(n > 0, n, 1.0), 0.0)

    @cached_property
    def _tri_tree(self) -> intersect.AabbTree:
        lo, hi = intersect.triangle_bounds(self.triangles)
        return intersect.AabbTree(lo, hi)

    # -- transforms -------------------------------------------------------
    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.faces)

    def scaled(self, factor: float, about=None) -> "TriMesh":
        about = self.aabb.center if about is None else np.asarray(about, dtype=float)
        return TriMesh(about + factor * (self.vertices - about), self.faces)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)) -> "TriMesh":
        r = np.asarray(rotation, dtype=float)
        return TriMesh(self.vertices @ r.T + np.asarray(translation, dtype=float), self.faces)

    def reversed(self) -> "TriMesh":
        """Same surface with flipped winding (normals inverted)."""
        return TriMesh(self.vertices, self.faces[:, ::-1])


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

def _weld(vertices: np.ndarray, faces: np.ndarray, tol: float):
    if tol <= 0 or not len(vertices):
        return vertices, faces
    keys = np.round(vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    # keep first-occurrence order for determinism
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_vertices = vertices[first[order]]
    remap = rank[inverse]
    new_faces = remap[faces]
    keep = (
        (new_faces[:, 0] != new_faces[:, 1])
        & (new_faces[:, 1] != new_faces[:, 2])
        & (new_faces[:, 2] != new_faces[:, 0])
    )
    return new_vertices, new_faces[keep]


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: only triangle faces are supported")
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: bad face index '{token}'") from exc
                if i <= 0:
                    raise ParseError(f"line {lineno}: face indices must be positive")
                idx.append(i - 1)
            faces.append(idx)
    if not verts or not faces:
        raise ParseError("no geometry found in OBJ input")
    v = np.array(verts, dtype=float)
    f = np.array(faces, dtype=np.int64)
    if f.max() >= len(v):
        raise ParseError("face references vertex index beyond vertex count")
    return v, f


def _parse_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count and count > 0:
            rec = np.frombuffer(data[84:], dtype=np.uint8).reshape(count, 50)
            tri = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(float)
            v = tri.reshape(-1, 3)
            f = np.arange(count * 3, dtype=np.int64).reshape(count, 3)
            return v, f
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError("STL file is neither valid binary nor ASCII") from exc
    verts: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if parts[:1] == ["vertex"]:
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append([float(x) for x in parts[1:]])
    if not verts or len(verts) % 3:
        raise ParseError("ASCII STL has no complete facets")
    v = np.array(verts, dtype=float)
    f = np.arange(len(verts), dtype=np.int64).reshape(-1, 3)
    return v, f


def load_mesh(path: Union[str, Path]) -> TriMesh:
    """Load an OBJ or STL file into a welded, outward-wound :class:`TriMesh`.

    Vertices closer than 1e-6 of the bounding diagonal are merged; degenerate
    faces produced by the weld are dropped. For closed meshes the winding is
    normalized so that the signed volume is positive.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"file not found: {path}")
    data = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".obj":
        v, f = _parse_obj(data.decode("utf-8", errors="replace"))
    elif suffix == ".stl":
        v, f = _parse_stl(data)
    else:
        raise ParseError(f"unsupported mesh format: {path.suffix}")
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
    if diag <= 0:
        raise ParseError("mesh has zero spatial extent")
    v, f = _weld(v, f, WELD_FRACTION * diag)
    if not len(f):
        raise ParseError("all faces degenerate after welding")
    mesh = TriMesh(v, f)
    if not mesh.is_edge_manifold or not mesh.is_oriented:
        raise TopologyError(f"{path.name}: non-manifold surface after weld")
    if mesh.is_closed and signed_volume(mesh) < 0:
        mesh = mesh.reversed()
    return mesh


def save_obj(mesh: TriMesh, path: Union[str, Path]) -> None:
    """Write a mesh as an OBJ file (1-based indices)."""
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def euler_genus(mesh: TriMesh) -> int:
    """Genus from the Euler characteristic; requires a closed manifold mesh."""
    if not mesh.is_closed:
        raise TopologyError("euler_genus requires a closed mesh")
    chi = mesh.n_vertices - mesh.n_edges + mesh.n_faces
    return (2 - chi) // 2


def signed_volume(mesh: TriMesh) -> float:
    """Divergence-theorem volume; positive for outward winding."""
    if not mesh.is_closed:
        raise TopologyError("signed_volume requires a closed mesh")
    t = mesh.triangles
    return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


def center_of_mass(mesh: Union[TriMesh, Sequence[TriMesh]]) -> np.ndarray:
    """Uniform-density centroid; volume-weighted average for multiple meshes."""
    meshes = [mesh] if isinstance(mesh, TriMesh) else list(mesh)
    total_v = 0.0
    acc = np.zeros(3)
    for m in meshes:
        t = m.triangles
        vols = np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])) / 6.0
        centroids = t.sum(axis=1) / 4.0  # tetra (0, v0, v1, v2) centroid
        v = float(vols.sum())
        acc += (vols[:, None] * centroids).sum(axis=0)
        total_v += v
    if abs(total_v) < 1e-12:
        raise DegenerateError("total volume too small for a center of mass")
    return acc / total_v


def _points_on_surface(mesh: TriMesh, points: np.ndarray, eps: float) -> np.ndarray:
    tris = mesh.triangles
    tree = mesh._tri_tree
    out = np.zeros(len(points), dtype=bool)
    for i, p in enumerate(points):
        _, d2 = tree.nearest(p, lambda items: intersect.closest_points_on_triangles(p, tris[items])[1])
        out[i] = d2 <= eps * eps
    return out


def points_inside(mesh: TriMesh, points) -> np.ndarray:
    """Vectorized :func:`point_inside` over an (N, 3) array of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tris = mesh.triangles
    tree = mesh._tri_tree
    diag = mesh.bounding_diagonal
    surf_eps = ON_SURFACE_FRACTION * max(diag, 1.0)
    result = np.zeros(len(points), dtype=bool)
    on_surf = _points_on_surface(mesh, points, surf_eps)
    result[on_surf] = True
    lo, hi = mesh.aabb.lo, mesh.aabb.hi
    for i, p in enumerate(points):
        if on_surf[i]:
            continue
        if (p < lo).any() or (p > hi).any():
            continue
        parity = None
        for attempt in range(MAX_RAY_RETRIES + 1):
            d = _RAY_DIRS[attempt]
            cand = tree.query_ray(p, d)
            if not len(cand):
                parity = 0
                break
            t, u, v, hit = intersect.ray_triangles(p, d, tris[cand])
            if not hit.any():
                parity = 0
                break
            margin = np.minimum(np.minimum(u, v), 1.0 - u - v)
            if (hit & (margin < EDGE_GRAZE_EPS)).any():
                continue  # grazing hit near a triangle edge: re-randomize
            parity = int(hit.sum())
            break
        if parity is None:
            # all retries grazed; fall back to the last parity estimate
            parity = int(hit.sum())
        result[i] = bool(parity % 2)
    return result


def point_inside(mesh: TriMesh, p) -> bool:
    """Ray-parity containment test; points exactly on the surface are inside."""
    return bool(points_inside(mesh, np.asarray(p, dtype=float)[None, :])[0])


def boxes_intersect_edges(a: TriMesh, b: TriMesh) -> bool:
    """Whether any edge of ``a`` comes within contact distance of an edge of ``b``.

    Edge AABB overlap acts as the broad phase; candidate pairs are confirmed
    with an exact segment-segment distance below ``1e-9``.
    """
    ea = a.vertices[a.edges]
    eb = b.vertices[b.edges]
    lo_a, hi_a = ea.min(axis=1), ea.max(axis=1)
    lo_b, hi_b = eb.min(axis=1), eb.max(axis=1)
    pad = EDGE_CONTACT_EPS
    mask = intersect.aabbs_overlap(
        lo_a[:, None, :], hi_a[:, None, :], lo_b[None, :, :], hi_b[None, :, :], pad
    )
    ia, ib = np.nonzero(mask)
    if not len(ia):
        return False
    d = intersect.segment_pairs_distance(ea[ia, 0], ea[ia, 1], eb[ib, 0], eb[ib, 1])
    return bool((d < EDGE_CONTACT_EPS).any())


def self_intersections(mesh: TriMesh, eps: float = 1e-12) -> list[tuple[int, int]]:
    """All pairs of non-adjacent faces that intersect with positive measure."""
    tris = mesh.triangles
    lo, hi = intersect.triangle_bounds(tris)
    mask = intersect.aabbs_overlap(
        lo[:, None, :], hi[:, None, :], lo[None, :, :], hi[None, :, :]
    )
    iu = np.triu_indices(mesh.n_faces, k=1)
    ia, ib = iu[0][mask[iu]], iu[1][mask[iu]]
    faces = mesh.faces
    out = []
    areas = mesh.face_areas
    area_eps = eps * max(mesh.bounding_diagonal, 1.0) ** 2
    for i, j in zip(ia, ib):
        if set(faces[i]) & set(faces[j]):
            continue
        if areas[i] <= area_eps or areas[j] <= area_eps:
            continue
        if intersect.tri_tri_intersect(tris[i], tris[j]):
            out.append((int(i), int(j)))
    return out


def is_self_intersecting(mesh: TriMesh) -> bool:
    return bool(self_intersections(mesh))


def merged(meshes: Iterable[TriMesh]) -> TriMesh:
    """Concatenate meshes into one soup (indices offset, no welding)."""
    vs, fs = [], []
    offset = 0
    for m in meshes:
        vs.append(m.vertices)
        fs.append(m.faces + offset)
        offset += m.n_vertices
    return TriMesh(np.concatenate(vs), np.concatenate(fs))
