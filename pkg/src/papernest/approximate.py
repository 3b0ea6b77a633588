"""Convert fine input structures into coarse, foldable papermeshes.

The pipeline is: wrap the input in a finely triangulated bounding box, pull
every wrap vertex to the closest point on the input surface, then decimate
with a volume-preserving edge-collapse down to the face budget.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import intersect
from .errors import ApproximationError, BudgetError, DegenerateError, TopologyError
from .mesh import TriMesh, euler_genus, self_intersections, signed_volume

DEFAULT_FACE_BUDGET = 150
SHAPE_COST_WEIGHT = 1e-3     # prefers collapsing short edges (volume-like units)
INFLATE_FRACTION = 0.01      # outward push per self-intersection retry
MAX_RETRIES = 3


@dataclass(frozen=True)
class Papermesh:
    """A foldable coarse stand-in for one input structure."""

    mesh: TriMesh
    source_id: str = ""
    face_budget: int = DEFAULT_FACE_BUDGET

    def validate(self) -> None:
        m = self.mesh
        if not m.is_closed or not m.is_oriented:
            raise TopologyError(f"papermesh '{self.source_id}' is not watertight")
        if euler_genus(m) != 0:
            raise TopologyError(f"papermesh '{self.source_id}' has genus != 0")
        if m.n_faces > self.face_budget:
            raise BudgetError(
                f"papermesh '{self.source_id}' has {m.n_faces} faces > budget {self.face_budget}"
            )
        bad = self_intersections(m)
        if bad:
            raise TopologyError(
                f"papermesh '{self.source_id}' self-intersects at face pairs {bad[:3]}"
            )


# ---------------------------------------------------------------------------
# Bounding-box wrap
# ---------------------------------------------------------------------------

def _grid_counts(extent: np.ndarray, target: int) -> tuple[int, int, int]:
    """Per-axis subdivision counts for a box shell of ~``target`` triangles.

    A box subdivided (n1, n2, n3) times along its axes carries
    ``4 * (n1*n2 + n2*n3 + n3*n1)`` triangles. We pick the smallest total
    >= target, preferring near-square grid cells.
    """
    n_max = int(np.ceil(np.sqrt(target / 4.0))) + 2
    best = None
    for n1 in range(1, n_max + 1):
        for n2 in range(1, n_max + 1):
            # solve the smallest n3 that reaches the target for this (n1, n2)
            rem = target / 4.0 - n1 * n2
            n3_lo = max(1, int(np.ceil(rem / (n1 + n2))))
            for n3 in (n3_lo, n3_lo + 1):
                total = 4 * (n1 * n2 + n2 * n3 + n3 * n1)
                if total < target:
                    continue
                cell = extent / np.array([n1, n2, n3], dtype=float)
                aspect = float(cell.max() / max(cell.min(), 1e-30))
                key = (total, aspect, n1, n2, n3)
                if best is None or key < best:
                    best = key
    assert best is not None
    return best[2], best[3], best[4]


def wrap_subdivide(input_mesh: TriMesh, target_fine_faces: int) -> TriMesh:
    """Bounding box of ``input_mesh`` subdivided into a fine triangle shell.

    Total faces land in [target, 1.2 * target] whenever the grid family can
    represent a value in that window (always true for targets >= 48); the
    smallest reachable total >= target is used otherwise.
    """
    if target_fine_faces < 12:
        raise DegenerateError("target_fine_faces must be at least 12")
    aabb = input_mesh.aabb
    extent = aabb.extent
    if (extent <= 1e-12 * max(aabb.diagonal, 1.0)).any():
        raise DegenerateError("input bounding box has a zero extent")
    n = _grid_counts(extent, target_fine_faces)
    lo = aabb.lo
    step = extent / np.array(n, dtype=float)

    vertex_ids: dict[tuple[int, int, int], int] = {}
    verts: list[np.ndarray] = []

    def vid(i: int, j: int, k: int) -> int:
        key = (i, j, k)
        if key not in vertex_ids:
            vertex_ids[key] = len(verts)
            verts.append(lo + step * np.array([i, j, k], dtype=float))
        return vertex_ids[key]

    faces: list[tuple[int, int, int]] = []
    # (u axis, v axis, fixed axis, fixed index); u x v = outward normal
    sides = [
        (1, 2, 0, n[0]),  # +x
        (2, 1, 0, 0),     # -x
        (2, 0, 1, n[1]),  # +y
        (0, 2, 1, 0),     # -y
        (0, 1, 2, n[2]),  # +z
        (1, 0, 2, 0),     # -z
    ]
    for ua, va, fa, fi in sides:
        for iu in range(n[ua]):
            for iv in range(n[va]):
                lat = [0, 0, 0]
                lat[fa] = fi

                def corner(du, dv):
                    lat2 = list(lat)
                    lat2[ua] = iu + du
                    lat2[va] = iv + dv
                    return vid(*lat2)

                p00, p10, p11, p01 = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
                faces.append((p00, p10, p11))
                faces.append((p00, p11, p01))
    mesh = TriMesh(np.asarray(verts), np.asarray(faces, dtype=np.int32))
    if signed_volume(mesh) < 0:
        mesh = mesh.reversed()
    return mesh


# ---------------------------------------------------------------------------
# Shrink wrap
# ---------------------------------------------------------------------------

def closest_surface_points(target: TriMesh, points: np.ndarray) -> np.ndarray:
    """Closest point on the ``target`` surface for each query point."""
    tris = target.triangles
    tree = target._tri_tree
    out = np.empty_like(points)
    for i, p in enumerate(points):
        best_item, _ = tree.nearest(
            p, lambda items: intersect.closest_points_on_triangles(p, tris[items])[1]
        )
        cp, _ = intersect.closest_points_on_triangles(p, tris[best_item][None, :, :])
        out[i] = cp[0]
    return out


def shrink_wrap(wrap: TriMesh, target: TriMesh) -> TriMesh:
    """Move every wrap vertex to its closest point on the target surface.

    Connectivity is unchanged, so the result stays combinatorially closed;
    coincident vertices and folded triangles are left for decimation to
    resolve.
    """
    return TriMesh(closest_surface_points(target, wrap.vertices), wrap.faces)


# ---------------------------------------------------------------------------
# Volume-preserving decimation
# ---------------------------------------------------------------------------

def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross carries too much axis-normalization overhead for hot loops
    out = np.empty(np.broadcast(a, b).shape[:-1] + (3,))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _tet_volumes(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    t = positions[faces]
    return np.einsum("ij,ij->i", t[:, 0], _cross(t[:, 1], t[:, 2])) / 6.0


class _CollapseState:
    """Mutable mesh state for the edge-collapse loop."""

    def __init__(self, mesh: TriMesh):
        self.pos = mesh.vertices.copy()
        self.faces = mesh.faces.astype(np.int64).copy()
        self.alive = np.ones(len(self.faces), dtype=bool)
        self.v_alive = np.ones(len(self.pos), dtype=bool)
        self.v2f: list[set[int]] = [set() for _ in range(len(self.pos))]
        for fi, (a, b, c) in enumerate(self.faces):
            self.v2f[a].add(fi)
            self.v2f[b].add(fi)
            self.v2f[c].add(fi)
        self.stamps = np.zeros(len(self.pos), dtype=np.int64)
        tris = self.pos[self.faces]
        self.f_lo = tris.min(axis=1)
        self.f_hi = tris.max(axis=1)
        self.n_alive = len(self.faces)
        diag = mesh.bounding_diagonal
        self.area_eps = 1e-14 * diag * diag

    def neighbors(self, v: int) -> set[int]:
        out: set[int] = set()
        for fi in self.v2f[v]:
            out.update(self.faces[fi])
        out.discard(v)
        return out

    def face_area_normal(self, fi: int):
        a, b, c = self.faces[fi]
        cr = _cross(self.pos[b] - self.pos[a], self.pos[c] - self.pos[a])
        return 0.5 * np.linalg.norm(cr), cr

    def evaluate(self, u: int, v: int):
        """Optimal placement and cost for collapsing edge (u, v) into u.

        Returns (cost, w) or None when the edge no longer exists.
        """
        shared = self.v2f[u] & self.v2f[v]
        if len(shared) != 2:
            return None
        ring = self.v2f[u] | self.v2f[v]
        ring_faces = self.faces[sorted(ring)]
        tris = self.pos[ring_faces]
        vols = np.einsum("ij,ij->i", tris[:, 0], _cross(tris[:, 1], tris[:, 2])) / 6.0
        v_before = float(vols.sum())
        # gradient of the post-collapse volume w.r.t. the new position w:
        # each surviving face keeps two vertices and gains w in its u/v slot
        moved = (ring_faces == u) | (ring_faces == v)
        survives = moved.sum(axis=1) == 1
        slot = moved[survives].argmax(axis=1)
        t_s = tris[survives]
        per_slot = np.stack(
            [_cross(t_s[:, 1], t_s[:, 2]), _cross(t_s[:, 2], t_s[:, 0]), _cross(t_s[:, 0], t_s[:, 1])]
        )
        g = per_slot[slot, np.arange(len(slot))].sum(axis=0)
        pu, pv = self.pos[u], self.pos[v]
        a0 = float(pu @ g) / 6.0 - v_before
        slope = float((pv - pu) @ g) / 6.0
        cands = []
        if abs(slope) > 1e-30:
            s_star = -a0 / slope
            if 0.0 <= s_star <= 1.0:
                cands.append(s_star)
        cands += [0.5, 0.0, 1.0]
        dv = np.array([abs(a0 + s * slope) for s in cands])
        s_best = cands[int(dv.argmin())]
        w = pu + s_best * (pv - pu)
        elen = float(np.linalg.norm(pv - pu))
        cost = float(dv.min()) + SHAPE_COST_WEIGHT * elen ** 3
        return cost, w

    def legal(self, u: int, v: int, w: np.ndarray) -> bool:
        shared = self.v2f[u] & self.v2f[v]
        if len(shared) != 2:
            return False
        # link condition: common neighbors limited to the two apex vertices
        apexes = set()
        for fi in shared:
            apexes.update(self.faces[fi])
        apexes -= {u, v}
        if self.neighbors(u) & self.neighbors(v) != apexes:
            return False
        moved = (self.v2f[u] | self.v2f[v]) - shared
        new_tris = []
        for fi in moved:
            tri = [w if x in (u, v) else self.pos[x] for x in self.faces[fi]]
            old_area, old_cr = self.face_area_normal(fi)
            cr = _cross(tri[1] - tri[0], tri[2] - tri[0])
            area = 0.5 * np.linalg.norm(cr)
            if area < self.area_eps and old_area >= self.area_eps:
                return False
            if old_area >= self.area_eps and area >= self.area_eps and float(cr @ old_cr) <= 0.0:
                return False  # normal flips by more than 90 degrees
            new_tris.append((fi, np.asarray(tri)))
        # reject collapses that would introduce self-intersections
        ring_verts = {u, v} | self.neighbors(u) | self.neighbors(v)
        for fi, tri in new_tris:
            lo = tri.min(axis=0)
            hi = tri.max(axis=0)
            cand = np.nonzero(
                self.alive
                & (self.f_lo <= hi).all(axis=1)
                & (lo <= self.f_hi).all(axis=1)
            )[0]
            new_ids = set(int(x) for x in self.faces[fi]) - {v} | {u}
            for cj in cand:
                cj = int(cj)
                if cj in moved or cj in shared:
                    continue
                if set(int(x) for x in self.faces[cj]) & new_ids:
                    continue
                if intersect.tri_tri_intersect(tri, self.pos[self.faces[cj]]):
                    return False
        return True

    def collapse(self, u: int, v: int, w: np.ndarray) -> set[int]:
        """Apply the collapse; returns vertices whose costs must be refreshed."""
        shared = self.v2f[u] & self.v2f[v]
        self.pos[u] = w
        for fi in shared:
            self.alive[fi] = False
            self.n_alive -= 1
            for x in self.faces[fi]:
                self.v2f[x].discard(fi)
        for fi in list(self.v2f[v]):
            self.faces[fi][self.faces[fi] == v] = u
            self.v2f[v].discard(fi)
            self.v2f[u].add(fi)
        self.v_alive[v] = False
        touched = {u} | self.neighbors(u)
        for fi in self.v2f[u]:
            tri = self.pos[self.faces[fi]]
            self.f_lo[fi] = tri.min(axis=0)
            self.f_hi[fi] = tri.max(axis=0)
        for x in touched:
            self.stamps[x] += 1
        return touched

    def compact(self) -> TriMesh:
        face_ids = np.nonzero(self.alive)[0]
        faces = self.faces[face_ids]
        used = np.unique(faces)
        remap = np.full(len(self.pos), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriMesh(self.pos[used], remap[faces])


def decimate(mesh: TriMesh, target_faces: int) -> TriMesh:
    """Iterative edge collapse with a volume-preserving placement.

    Collapses that would break manifoldness, flip face normals, or create
    self-intersections are rejected; the loop stops at or below
    ``target_faces`` or when no legal collapse remains.
    """
    if target_faces < 4:
        raise DegenerateError("target_faces must be at least 4")
    if not mesh.is_closed or not mesh.is_oriented:
        raise TopologyError("decimate requires a closed, oriented mesh")
    if mesh.n_faces <= target_faces:
        return mesh
    state = _CollapseState(mesh)
    heap: list[tuple[float, int, int, int, int, int, float, float, float]] = []
    counter = 0

    def push(u: int, v: int):
        nonlocal counter
        if u > v:
            u, v = v, u
        ev = state.evaluate(u, v)
        if ev is None:
            return
        cost, w = ev
        heapq.heappush(
            heap,
            (cost, counter, u, v, int(state.stamps[u]), int(state.stamps[v]), w[0], w[1], w[2]),
        )
        counter += 1

    for a, b in mesh.edges:
        push(int(a), int(b))

    while state.n_alive > target_faces and heap:
        cost, _, u, v, su, sv, wx, wy, wz = heapq.heappop(heap)
        if state.stamps[u] != su or state.stamps[v] != sv:
            continue
        if not state.v_alive[u] or not state.v_alive[v]:
            continue
        w = np.array([wx, wy, wz])
        if not state.legal(u, v, w):
            continue
        touched = state.collapse(u, v, w)
        seen = set()
        for x in touched:
            for y in state.neighbors(x):
                key = (x, y) if x < y else (y, x)
                if key not in seen:
                    seen.add(key)
                    push(*key)

    if state.n_alive > max(target_faces, 4) and state.n_alive > 1.5 * target_faces:
        raise BudgetError(
            f"no legal collapse sequence below 1.5x target "
            f"({state.n_alive} faces left, target {target_faces})"
        )
    return state.compact()


# ---------------------------------------------------------------------------
# Full papermesh construction
# ---------------------------------------------------------------------------

def make_papermesh(
    input_mesh: TriMesh,
    fine_faces: int,
    face_budget: int = DEFAULT_FACE_BUDGET,
    source_id: str = "",
) -> Papermesh:
    """wrap_subdivide -> shrink_wrap -> decimate, with validation and retries.

    If the decimated mesh self-intersects, the shrunk wrap is pushed outward
    along its vertex normals by 1% of the bounding diagonal per retry.
    """
    wrap = wrap_subdivide(input_mesh, fine_faces)
    shrunk = shrink_wrap(wrap, input_mesh)
    diag = input_mesh.bounding_diagonal
    last_error: Exception | None = None
    for attempt in range(MAX_RETRIES + 1):
        candidate = shrunk
        if attempt > 0:
            offset = attempt * INFLATE_FRACTION * diag
            candidate = TriMesh(
                shrunk.vertices + shrunk.vertex_normals * offset, shrunk.faces
            )
        try:
            coarse = decimate(candidate, face_budget)
            paper = Papermesh(coarse, source_id=source_id, face_budget=face_budget)
            paper.validate()
            return paper
        except (TopologyError, BudgetError) as exc:
            last_error = exc
    raise ApproximationError(
        f"could not build a valid papermesh for '{source_id}' "
        f"after {MAX_RETRIES} retries: {last_error}"
    )
