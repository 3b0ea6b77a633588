"""Gravity stability of the cut assembly, and the ranked-cut retry loop.

The simulator is a self-contained impulse-based rigid-body integrator with
non-penetration contacts and Coulomb friction; an independent static
equilibrium check acts as a fast pre-filter and cross-validation oracle.
Stability is defined by the contract: no part's center of mass may drift more
than 2% of the assembly bounding diagonal over the simulated horizon.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .cutter import CutPlane, CutResult, Envelope, LevelCutPlan, clip_and_stitch, make_envelope, plan_cut_for_level
from .errors import NoStableCutError, StitchError
from .hierarchy import HierarchyTree
from .mesh import TriMesh, center_of_mass, euler_genus, signed_volume
from .viewpoint import ViewRanking

GROUND = -1
DISPLACEMENT_LIMIT = 0.02       # fraction of assembly bounding diagonal
VELOCITY_LIMIT = 1e3
DEFAULT_FRICTION = 0.5
DEFAULT_STEPS = 600
DEFAULT_DT = 1.0 / 240.0
GROUND_BAND_FRACTION = 1e-3     # vertices this close to the lowest point touch ground
SUPPORT_MARGIN_FRACTION = 5e-3  # slack when testing c_m over the support polygon


@dataclass
class Contact:
    """Planar contact acting on one part.

    ``normal`` points from the other part toward this one (the direction the
    other part can push); ``points`` are world-space contact locations.
    """

    other: int
    normal: np.ndarray
    points: np.ndarray

    @property
    def plane_point(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class RigidPart:
    part_id: int
    name: str
    mesh: TriMesh
    mass: float
    c_m: np.ndarray
    contacts: list[Contact] = field(default_factory=list)


@dataclass
class StabilityReport:
    stable: bool
    max_displacement: float   # fraction of assembly bounding diagonal
    failing_parts: list[int]
    diverged: bool = False
    trace: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "stable": bool(self.stable),
            "max_displacement": float(self.max_displacement),
            "failing_parts": [int(x) for x in self.failing_parts],
            "diverged": bool(self.diverged),
        }


def write_trace_csv(report: StabilityReport, path) -> None:
    """Dump the per-step max displacement trace for debugging."""
    if report.trace is None:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "max_displacement_fraction"])
        for i, v in enumerate(report.trace):
            writer.writerow([i, f"{v:.9g}"])


# ---------------------------------------------------------------------------
# Assembly construction
# ---------------------------------------------------------------------------

def _plane_face_ids(mesh: TriMesh, plane: CutPlane, tol: float) -> np.ndarray:
    d = np.abs(plane.signed_distance(mesh.vertices))
    on = d <= tol
    return np.nonzero(on[mesh.faces].all(axis=1))[0]


def build_assembly(
    tree: HierarchyTree,
    cuts: Mapping[str, CutResult],
    up=(0.0, 1.0, 0.0),
    density: float = 1.0,
) -> list[RigidPart]:
    """One rigid part per shell half and per uncut papermesh, with contacts.

    Contacts cover: the cut-plane annulus between two halves, the coincident
    cradle surfaces between a cut node's halves and the pieces nested inside,
    and ground contact for whatever rests at the assembly's lowest point.
    """
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    parts: list[RigidPart] = []
    node_parts: dict[str, list[int]] = {}

    def add_part(name: str, mesh: TriMesh) -> int:
        pid = len(parts)
        vol = abs(signed_volume(mesh))
        parts.append(
            RigidPart(part_id=pid, name=name, mesh=mesh, mass=density * max(vol, 1e-12), c_m=center_of_mass(mesh))
        )
        return pid

    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if nid in cuts:
            cut = cuts[nid]
            node_parts[nid] = [
                add_part(f"{nid}/pos", cut.half_pos),
                add_part(f"{nid}/neg", cut.half_neg),
            ]
        else:
            node_parts[nid] = [
                add_part(f"{nid}/{p.source_id or i}", p.mesh)
                for i, p in enumerate(node.papermeshes)
            ]

    diag = float(
        np.linalg.norm(
            np.max([p.mesh.aabb.hi for p in parts], axis=0)
            - np.min([p.mesh.aabb.lo for p in parts], axis=0)
        )
    )
    tol = 1e-6 * max(diag, 1.0)

    # cut-plane contact between the two halves of each cut node
    for nid, cut in cuts.items():
        pid_pos, pid_neg = node_parts[nid]
        cap_ids = _plane_face_ids(cut.half_pos, cut.plane, tol)
        if len(cap_ids):
            pts = np.unique(cut.half_pos.vertices[cut.half_pos.faces[cap_ids]].reshape(-1, 3), axis=0)
            n = cut.plane.normal
            parts[pid_pos].contacts.append(Contact(other=pid_neg, normal=n.copy(), points=pts))
            parts[pid_neg].contacts.append(Contact(other=pid_pos, normal=-n, points=pts))

    # cradle contacts: nested pieces rest on the coincident cavity surfaces
    for nid, cut in cuts.items():
        pid_pos, pid_neg = node_parts[nid]
        for child_id in tree.nodes[nid].children:
            for pid in node_parts[child_id]:
                child = parts[pid]
                centroids = child.mesh.triangles.mean(axis=1)
                normals = child.mesh.face_normals
                if child_id in cuts:
                    # skip the child's own cap faces: they are interior
                    own = np.abs(cuts[child_id].plane.signed_distance(centroids)) <= tol
                else:
                    own = np.zeros(len(centroids), dtype=bool)
                side = cut.plane.signed_distance(centroids) > 0
                for host, mask in ((pid_pos, ~own & side), (pid_neg, ~own & ~side)):
                    # one contact per face keeps contact planes planar
                    for fi in np.nonzero(mask)[0]:
                        child.contacts.append(
                            Contact(other=host, normal=-normals[fi], points=centroids[fi][None, :])
                        )

    # ground contact: anchor candidate vertices onto the ground plane so that
    # points slightly above it engage only on touchdown (lets parts rock and
    # settle instead of pivoting forever on a single vertex)
    heights = [p.mesh.vertices @ up for p in parts]
    ground = min(float(h.min()) for h in heights)
    band = GROUND_BAND_FRACTION * max(diag, 1.0)
    wide_band = 0.05 * max(diag, 1.0)
    for p, h in zip(parts, heights):
        if h.min() > ground + band:
            continue
        touching = p.mesh.vertices[h <= ground + wide_band]
        if len(touching):
            p.contacts.append(Contact(other=GROUND, normal=up.copy(), points=touching))
    return parts


# ---------------------------------------------------------------------------
# Rigid-body simulation
# ---------------------------------------------------------------------------

def _inertia_tensor(mesh: TriMesh, mass: float, c_m: np.ndarray) -> np.ndarray:
    """Uniform-solid inertia about the center of mass (tetra covariance sum)."""
    canonical = np.full((3, 3), 1.0 / 120.0)
    np.fill_diagonal(canonical, 1.0 / 60.0)
    cov = np.zeros((3, 3))
    volume = 0.0
    for tri in mesh.triangles - c_m:
        a = tri.T  # columns are vertices of the tetra (origin, v0, v1, v2)
        det = float(np.linalg.det(a))
        cov += det * a @ canonical @ a.T
        volume += det / 6.0
    if abs(volume) < 1e-15:
        return np.eye(3) * mass
    cov *= mass / abs(volume)  # scale the geometric integral by density
    return np.eye(3) * np.trace(cov) - cov


@dataclass
class _Body:
    mass: float
    inv_mass: float
    inertia_inv_body: np.ndarray
    x0: np.ndarray
    x: np.ndarray
    rot: np.ndarray
    v: np.ndarray
    w: np.ndarray


def _skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0.0]])


def simulate_stability(
    parts: Sequence[RigidPart],
    gravity: float = 9.81,
    friction: float = DEFAULT_FRICTION,
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
    up=(0.0, 1.0, 0.0),
    keep_trace: bool = False,
) -> StabilityReport:
    """Time-stepped rigid-body check of whether the assembly holds together.

    Contacts are persistent (attached to body frames at t=0) and solved with
    projected impulses plus Coulomb friction each step. The assembly is stable
    iff every part's center of mass stays within 2% of the bounding diagonal.
    A velocity blow-up beyond 1e3 units/s counts as divergence and reports
    unstable immediately.
    """
    if not parts:
        raise ValueError("no parts to simulate")
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    g_vec = -up * gravity
    lo = np.min([p.mesh.aabb.lo for p in parts], axis=0)
    hi = np.max([p.mesh.aabb.hi for p in parts], axis=0)
    diag = float(np.linalg.norm(hi - lo))
    limit = DISPLACEMENT_LIMIT * max(diag, 1e-12)

    bodies: list[_Body] = []
    for p in parts:
        inertia = _inertia_tensor(p.mesh, p.mass, p.c_m)
        bodies.append(
            _Body(
                mass=p.mass,
                inv_mass=1.0 / p.mass,
                inertia_inv_body=np.linalg.inv(inertia + np.eye(3) * 1e-12),
                x0=p.c_m.copy(),
                x=p.c_m.copy(),
                rot=np.eye(3),
                v=np.zeros(3),
                w=np.zeros(3),
            )
        )

    ground_level = float(min((p.mesh.vertices @ up).min() for p in parts))

    # merge contacts into one solver group per (part, other) pair, with
    # per-point normals; local anchors are attached to both body frames
    merged: dict[tuple[int, int], list[tuple[np.ndarray, np.ndarray]]] = {}
    for p in parts:
        a = p.part_id
        for c in p.contacts:
            n_unit = c.normal / np.linalg.norm(c.normal)
            merged.setdefault((a, c.other), []).append(
                (c.points, np.broadcast_to(n_unit, c.points.shape))
            )
    groups = []
    for (a, b), chunks in sorted(merged.items()):
        points = np.concatenate([pts for pts, _ in chunks])
        normals = np.concatenate([ns for _, ns in chunks])
        r_a = points - bodies[a].x0
        if b == GROUND:
            drop = (points @ up) - ground_level
            anchor_b = points - np.outer(drop, up)
            r_b = None
        else:
            r_b = points - bodies[b].x0
            anchor_b = None
        groups.append(
            {
                "a": a,
                "b": b,
                "r_a0": r_a,
                "r_b0": r_b,
                "anchor_b": anchor_b,
                "n0": normals,
                "lam_n": np.zeros(len(points)),
            }
        )

    slop = 1e-4 * max(diag, 1e-12)
    beta = 0.2
    n_iter = 24
    max_disp = 0.0
    failing: set[int] = set()
    trace = np.zeros(steps) if keep_trace else None

    for step in range(steps):
        for b in bodies:
            b.v = b.v + g_vec * dt
        for _ in range(n_iter):
            for grp in groups:
                a = bodies[grp["a"]]
                r_a = grp["r_a0"] @ a.rot.T
                p_a = a.x + r_a
                if grp["b"] == GROUND:
                    n = grp["n0"]
                    p_b = grp["anchor_b"]
                    v_b = np.zeros(3)
                    w_b = np.zeros(3)
                    inv_mb = 0.0
                    ib_inv = None
                    r_b = np.zeros_like(r_a)
                    bb = None
                else:
                    bb = bodies[grp["b"]]
                    r_b = grp["r_b0"] @ bb.rot.T
                    p_b = bb.x + r_b
                    n = grp["n0"] @ bb.rot.T
                    v_b, w_b = bb.v, bb.w
                    inv_mb = bb.inv_mass
                    ib_inv = bb.rot @ bb.inertia_inv_body @ bb.rot.T
                ia_inv = a.rot @ a.inertia_inv_body @ a.rot.T
                u = (a.v + np.cross(a.w, r_a)) - (v_b + np.cross(w_b, r_b))
                u_n = np.einsum("ij,ij->i", u, n)
                gap = np.einsum("ij,ij->i", p_a - p_b, n)
                bias = -(beta / dt) * np.minimum(gap + slop, 0.0)
                rn_a = np.cross(r_a, n)
                k = a.inv_mass + inv_mb + np.einsum("ij,ij->i", rn_a @ ia_inv, rn_a)
                if ib_inv is not None:
                    rn_b = np.cross(r_b, n)
                    k = k + np.einsum("ij,ij->i", rn_b @ ib_inv, rn_b)
                # mass splitting: a group's points solve jointly (Jacobi), so
                # each may only claim its share of the combined impulse
                relax = 1.0 / len(r_a)
                d_lam = -relax * (u_n - bias) / np.maximum(k, 1e-12)
                lam_old = grp["lam_n"].copy()
                grp["lam_n"] = np.maximum(0.0, lam_old + d_lam)
                d_applied = grp["lam_n"] - lam_old
                imp = n * d_applied[:, None]
                a.v = a.v + a.inv_mass * imp.sum(axis=0)
                a.w = a.w + ia_inv @ np.cross(r_a, imp).sum(axis=0)
                if bb is not None:
                    bb.v = bb.v - inv_mb * imp.sum(axis=0)
                    bb.w = bb.w - ib_inv @ np.cross(r_b, imp).sum(axis=0)
                # Coulomb friction against the accumulated normal impulse
                u = (a.v + np.cross(a.w, r_a)) - (v_b + np.cross(w_b, r_b))
                u_t = u - n * np.einsum("ij,ij->i", u, n)[:, None]
                t_norm = np.linalg.norm(u_t, axis=1)
                active = t_norm > 1e-12
                if active.any():
                    t_dir = np.zeros_like(u_t)
                    t_dir[active] = u_t[active] / t_norm[active][:, None]
                    rt_a = np.cross(r_a, t_dir)
                    kt = a.inv_mass + inv_mb + np.einsum("ij,ij->i", rt_a @ ia_inv, rt_a)
                    if ib_inv is not None:
                        rt_b = np.cross(r_b, t_dir)
                        kt = kt + np.einsum("ij,ij->i", rt_b @ ib_inv, rt_b)
                    lam_t = np.clip(
                        relax * t_norm / np.maximum(kt, 1e-12), 0.0, friction * grp["lam_n"]
                    )
                    imp_t = -t_dir * lam_t[:, None]
                    a.v = a.v + a.inv_mass * imp_t.sum(axis=0)
                    a.w = a.w + ia_inv @ np.cross(r_a, imp_t).sum(axis=0)
                    if bb is not None:
                        bb.v = bb.v - inv_mb * imp_t.sum(axis=0)
                        bb.w = bb.w - ib_inv @ np.cross(r_b, imp_t).sum(axis=0)
        diverged = False
        for i, b in enumerate(bodies):
            if np.linalg.norm(b.v) > VELOCITY_LIMIT:
                diverged = True
            b.x = b.x + b.v * dt
            w_norm = np.linalg.norm(b.w)
            if w_norm > 1e-12:
                axis = b.w / w_norm
                angle = w_norm * dt
                kmat = _skew(axis)
                b.rot = (np.eye(3) + np.sin(angle) * kmat + (1 - np.cos(angle)) * kmat @ kmat) @ b.rot
            disp = float(np.linalg.norm(b.x - b.x0))
            if disp > max_disp:
                max_disp = disp
            if disp >= limit:
                failing.add(i)
        if trace is not None:
            trace[step] = max_disp / max(diag, 1e-12)
        if diverged:
            return StabilityReport(
                stable=False,
                max_displacement=max_disp / max(diag, 1e-12),
                failing_parts=sorted(failing) or list(range(len(bodies))),
                diverged=True,
                trace=trace[: step + 1] if trace is not None else None,
            )
        if len(failing) == len(bodies) and max_disp > 10 * limit:
            break  # everything already failed; no need to finish the horizon
    frac = max_disp / max(diag, 1e-12)
    return StabilityReport(
        stable=frac < DISPLACEMENT_LIMIT,
        max_displacement=frac,
        failing_parts=sorted(failing),
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Static equilibrium oracle
# ---------------------------------------------------------------------------

def _point_in_hull_2d(point: np.ndarray, pts: np.ndarray, margin: float) -> bool:
    pts = np.unique(np.round(pts / max(margin, 1e-12) * 1e3), axis=0) * max(margin, 1e-12) / 1e3
    if len(pts) == 1:
        return bool(np.linalg.norm(point - pts[0]) <= margin)
    if len(pts) == 2 or np.linalg.matrix_rank(pts - pts[0]) < 2:
        a, b = pts[0], pts[-1]
        d = b - a
        t = np.clip((point - a) @ d / max(d @ d, 1e-30), 0.0, 1.0)
        return bool(np.linalg.norm(point - (a + t * d)) <= margin)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        a, b = pts[0], pts[-1]
        d = b - a
        t = np.clip((point - a) @ d / max(d @ d, 1e-30), 0.0, 1.0)
        return bool(np.linalg.norm(point - (a + t * d)) <= margin)
    eq = hull.equations
    return bool((eq[:, :2] @ point + eq[:, 2] <= margin).all())


def static_equilibrium_check(
    parts: Sequence[RigidPart],
    friction: float = DEFAULT_FRICTION,
    up=(0.0, 1.0, 0.0),
) -> bool:
    """Fast support-polygon and friction-cone equilibrium test.

    For each part, the gravity line through the loaded center of mass must
    fall inside the horizontal projection of its supporting contacts, and no
    loaded contact may demand a tangential/normal force ratio above mu. Loads
    from supported parts are propagated downward. This is a pre-filter; the
    simulator stays authoritative.
    """
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    e1 = np.cross(up, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(up, [0.0, 0.0, 1.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(up, e1)

    def horiz(p):
        return np.array([p @ e1, p @ e2])

    diag = float(
        np.linalg.norm(
            np.max([p.mesh.aabb.hi for p in parts], axis=0)
            - np.min([p.mesh.aabb.lo for p in parts], axis=0)
        )
    )
    margin = SUPPORT_MARGIN_FRACTION * max(diag, 1e-12)

    supports: dict[int, list[Contact]] = {p.part_id: [] for p in parts}
    supported_by: dict[int, set[int]] = {p.part_id: set() for p in parts}
    for p in parts:
        for c in p.contacts:
            if c.normal @ up > 0.1:
                supports[p.part_id].append(c)
                if c.other != GROUND:
                    supported_by[p.part_id].add(c.other)

    # propagate loads from unsupported-above parts downward (topological-ish:
    # iterate by descending height of c_m)
    order = sorted(parts, key=lambda p: -float(p.c_m @ up))
    load_mass = {p.part_id: p.mass for p in parts}
    load_point = {p.part_id: p.c_m.copy() for p in parts}
    for p in order:
        sup = supports[p.part_id]
        if not sup:
            return False  # floating or only sideways contacts
        for c in sup:
            theta_ratio = np.linalg.norm(c.normal - (c.normal @ up) * up) / max(c.normal @ up, 1e-12)
            if theta_ratio > friction + 1e-9:
                return False
        com2 = horiz(load_point[p.part_id])
        pts2 = np.array([horiz(q) for c in sup for q in c.points])
        if not _point_in_hull_2d(com2, pts2, margin):
            return False
        # transfer this part's load to whichever parts support it
        receivers = {c.other for c in sup if c.other != GROUND}
        if receivers:
            share = load_mass[p.part_id] / len(receivers)
            for r in receivers:
                total = load_mass[r] + share
                load_point[r] = (load_point[r] * load_mass[r] + load_point[p.part_id] * share) / total
                load_mass[r] = total
    return True


# ---------------------------------------------------------------------------
# Ranked-cut planning
# ---------------------------------------------------------------------------

@dataclass
class CutPlan:
    planes: dict[int, CutPlane]
    cuts: dict[str, CutResult]
    level_reports: dict[int, StabilityReport]
    rejected: dict[int, int]
    full_report: StabilityReport | None = None

    def to_dict(self) -> dict:
        return {
            "planes": {
                str(lvl): {
                    "origin": [float(x) for x in pl.origin],
                    "normal": [float(x) for x in pl.normal],
                }
                for lvl, pl in self.planes.items()
            },
            "rejected_candidates": {str(k): int(v) for k, v in self.rejected.items()},
            "level_stability": {str(k): r.to_dict() for k, r in self.level_reports.items()},
            "full_stability": self.full_report.to_dict() if self.full_report else None,
        }


def _valid_halves(cut: CutResult, envelope_volume: float) -> bool:
    for half in cut.halves:
        if not half.is_closed or not half.is_oriented:
            return False
        if euler_genus(half) != 0:
            return False
    total = signed_volume(cut.half_pos) + signed_volume(cut.half_neg)
    return abs(total - envelope_volume) <= 5e-3 * max(abs(envelope_volume), 1e-12)


def _cut_level(tree: HierarchyTree, level_nodes, cuts_so_far, plane) -> dict[str, CutResult]:
    """Cut every parent node of this level with one shared plane."""
    out: dict[str, CutResult] = {}
    for nid in level_nodes:
        node = tree.nodes[nid]
        if not node.children:
            continue
        if len(node.papermeshes) != 1:
            raise NoStableCutError(
                f"node '{nid}' groups {len(node.papermeshes)} meshes and has children; "
                "cutting multi-mesh parents is not supported"
            )
        inners = [p for cid in node.children for p in tree.nodes[cid].papermeshes]
        env = make_envelope(node.papermeshes[0], inners)
        half_pos, half_neg = clip_and_stitch(env, plane)
        cut = CutResult(node_id=nid, plane=plane, half_pos=half_pos, half_neg=half_neg)
        if not _valid_halves(cut, env.volume):
            raise StitchError(f"cut of '{nid}' produced invalid halves")
        out[nid] = cut
    return out


def plan_cuts(
    tree: HierarchyTree,
    rankings: Mapping[int, ViewRanking],
    up=(0.0, 1.0, 0.0),
    friction: float = DEFAULT_FRICTION,
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
) -> CutPlan:
    """Choose, per level, the highest-ranked cut whose assembly is stable.

    Levels are processed innermost first. For speed, candidates failing the
    static pre-filter are deferred; they are only simulated if no candidate
    passes both tests (the simulator stays authoritative either way). The
    final full assembly is re-checked at the end.
    """
    levels = tree.levels()
    cut_levels = sorted((lvl for lvl in levels if lvl >= 1), reverse=True)
    planes: dict[int, CutPlane] = {}
    cuts: dict[str, CutResult] = {}
    level_reports: dict[int, StabilityReport] = {}
    rejected: dict[int, int] = {}

    for lvl in cut_levels:
        parent_nodes = levels[lvl - 1]
        if not any(tree.nodes[nid].children for nid in parent_nodes):
            continue
        plan = plan_cut_for_level(tree, lvl, rankings[lvl])
        accepted = None
        n_rejected = 0
        deferred: list[CutPlane] = []

        def try_plane(plane: CutPlane):
            candidate_cuts = _cut_level(tree, parent_nodes, cuts, plane)
            trial = dict(cuts)
            trial.update(candidate_cuts)
            # simulate each cut parent's subtree in isolation
            sub_ids = set()
            for nid in candidate_cuts:
                stack = [nid]
                while stack:
                    cur = stack.pop()
                    sub_ids.add(cur)
                    stack.extend(tree.nodes[cur].children)
            sub_tree = HierarchyTree(
                nodes={k: tree.nodes[k] for k in sub_ids},
                root=sorted(candidate_cuts)[0],
            )
            parts = build_assembly(sub_tree, {k: v for k, v in trial.items() if k in sub_ids}, up=up)
            return candidate_cuts, parts

        for plane in plan.iter_planes():
            try:
                candidate_cuts, parts = try_plane(plane)
            except (StitchError, NoStableCutError):
                n_rejected += 1
                continue
            if not static_equilibrium_check(parts, friction, up):
                deferred.append(plane)
                continue
            report = simulate_stability(parts, friction=friction, steps=steps, dt=dt, up=up)
            if report.stable:
                accepted = (plane, candidate_cuts, report)
                break
            n_rejected += 1
        if accepted is None:
            for plane in deferred:
                try:
                    candidate_cuts, parts = try_plane(plane)
                except (StitchError, NoStableCutError):
                    n_rejected += 1
                    continue
                report = simulate_stability(parts, friction=friction, steps=steps, dt=dt, up=up)
                if report.stable:
                    accepted = (plane, candidate_cuts, report)
                    break
                n_rejected += 1
        if accepted is None:
            raise NoStableCutError(f"no stable cut found for level {lvl}")
        plane, candidate_cuts, report = accepted
        planes[lvl] = plane
        cuts.update(candidate_cuts)
        level_reports[lvl] = report
        rejected[lvl] = n_rejected

    full_report = None
    if cuts:
        parts = build_assembly(tree, cuts, up=up)
        full_report = simulate_stability(parts, friction=friction, steps=steps, dt=dt, up=up)
        if not full_report.stable:
            raise NoStableCutError("full nested assembly is unstable with the chosen cuts")
    return CutPlan(
        planes=planes,
        cuts=cuts,
        level_reports=level_reports,
        rejected=rejected,
        full_report=full_report,
    )
