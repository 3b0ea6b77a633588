"""Low-level geometric queries on triangle and segment soups.

Everything here works on raw numpy arrays; mesh-level wrappers live in
:mod:`papernest.mesh`. Triangles are ``(n, 3, 3)`` arrays, epsilons are
absolute unless stated otherwise.
"""
from __future__ import annotations

import numpy as np

PARALLEL_EPS = 1e-12


def _dot(a, b):
    return (a * b).sum(axis=-1)


def triangle_bounds(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle AABB corners ``(lo, hi)``."""
    return tris.min(axis=1), tris.max(axis=1)


def aabbs_overlap(lo_a, hi_a, lo_b, hi_b, pad: float = 0.0) -> np.ndarray:
    """Boolean mask of pairwise AABB overlap, broadcasting over leading axes."""
    return np.logical_and(
        (lo_a - pad <= hi_b).all(axis=-1), (lo_b - pad <= hi_a).all(axis=-1)
    )


def ray_triangles(origin, direction, tris, eps: float = PARALLEL_EPS):
    """Moller-Trumbore test of one ray against many triangles.

    Returns ``(t, u, v, hit)`` where ``hit`` marks triangles intersected at
    ``t > 0`` with barycentric coordinates inside the closed triangle.
    """
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    pvec = np.cross(direction[None, :], e2)
    det = _dot(e1, pvec)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin[None, :] - tris[:, 0]
    u = _dot(tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    v = _dot(direction[None, :], qvec) * inv
    t = _dot(e2, qvec) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 0.0)
    return t, u, v, hit


def closest_points_on_triangles(p, tris):
    """Closest point on each triangle to ``p``; returns ``(points, dist_sq)``.

    Robust to degenerate triangles: candidates are the clamped interior
    projection plus the three edge segments.
    """
    p = np.asarray(p, dtype=float)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = _dot(n, n)
    safe = nn > PARALLEL_EPS ** 2
    nn_safe = np.where(safe, nn, 1.0)
    proj = p[None, :] - n * (_dot(p[None, :] - a, n) / nn_safe)[:, None]
    # barycentric test for the in-plane projection
    w0 = _dot(np.cross(c - b, proj - b), n) / nn_safe
    w1 = _dot(np.cross(a - c, proj - c), n) / nn_safe
    w2 = _dot(np.cross(b - a, proj - a), n) / nn_safe
    interior = safe & (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)

    def seg(p0, p1):
        d = p1 - p0
        dd = _dot(d, d)
        t = np.where(dd > 0.0, _dot(p[None, :] - p0, d) / np.where(dd > 0, dd, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        return p0 + d * t[:, None]

    cands = np.stack([
        np.where(interior[:, None], proj, np.inf),
        seg(a, b),
        seg(b, c),
        seg(c, a),
    ])  # (4, n, 3)
    d2 = ((cands - p[None, None, :]) ** 2).sum(axis=-1)
    d2 = np.where(np.isfinite(d2), d2, np.inf)
    pick = d2.argmin(axis=0)
    idx = np.arange(tris.shape[0])
    return cands[pick, idx], d2[pick, idx]


def segment_pairs_distance(p1, q1, p2, q2):
    """Minimum distance between segment pairs (vectorized, Ericson 5.1.9)."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    c = _dot(d1, r)
    b = _dot(d1, d2)
    denom = a * e - b * b
    s = np.where(denom > PARALLEL_EPS, np.clip((b * f - c * e) / np.where(denom > PARALLEL_EPS, denom, 1.0), 0.0, 1.0), 0.0)
    e_safe = np.where(e > PARALLEL_EPS, e, 1.0)
    t = (b * s + f) / e_safe
    t_clamped = np.clip(t, 0.0, 1.0)
    a_safe = np.where(a > PARALLEL_EPS, a, 1.0)
    s = np.where(t != t_clamped, np.clip((b * t_clamped - c) / a_safe, 0.0, 1.0), s)
    s = np.where(a <= PARALLEL_EPS, 0.0, s)
    t_clamped = np.where(e <= PARALLEL_EPS, 0.0, t_clamped)
    closest1 = p1 + d1 * s[..., None]
    closest2 = p2 + d2 * t_clamped[..., None]
    return np.sqrt(((closest1 - closest2) ** 2).sum(axis=-1))


def _project_tri(tri, axis):
    keep = [i for i in range(3) if i != axis]
    return tri[:, keep]


def _tri2_overlap(t1, t2, eps):
    """Positive-area overlap of two coplanar triangles projected to 2D."""

    def seg_int(a, b, c, d):
        d1 = b - a
        d2 = d - c
        den = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(den) < eps:
            return False
        s = ((c[0] - a[0]) * d2[1] - (c[1] - a[1]) * d2[0]) / den
        t = ((c[0] - a[0]) * d1[1] - (c[1] - a[1]) * d1[0]) / den
        return eps < s < 1 - eps and eps < t < 1 - eps

    def pt_in(tri, p):
        s = 0
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            cr = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            if abs(cr) < eps:
                return False
            s_i = 1 if cr > 0 else -1
            if s == 0:
                s = s_i
            elif s != s_i:
                return False
        return True

    for i in range(3):
        for j in range(3):
            if seg_int(t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]):
                return True
    return any(pt_in(t1, p) for p in t2) or any(pt_in(t2, p) for p in t1)


def tri_tri_intersect(t1, t2, eps: float = 1e-12) -> bool:
    """Whether two 3D triangles intersect with positive measure.

    Shared vertices or edge-only contact within ``eps`` do not count; callers
    that must ignore adjacency should exclude index-sharing pairs themselves.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    d1 = (t1 - t2[0]) @ n2
    scale2 = max(np.abs(d1).max(), 1.0)
    if (d1 > eps * scale2).all() or (d1 < -eps * scale2).all():
        return False
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    d2 = (t2 - t1[0]) @ n1
    scale1 = max(np.abs(d2).max(), 1.0)
    if (d2 > eps * scale1).all() or (d2 < -eps * scale1).all():
        return False

    coplanar = (np.abs(d1) <= eps * scale2).all()
    if coplanar:
        axis = int(np.abs(n2).argmax()) if _dot(n2, n2) > 0 else 2
        return _tri2_overlap(_project_tri(t1, axis), _project_tri(t2, axis), eps)

    line = np.cross(n1, n2)
    axis = int(np.abs(line).argmax())

    def interval(tri, dists):
        proj = tri[:, axis]
        pts = []
        for i in range(3):
            for j in range(i + 1, 3):
                if (dists[i] > 0) != (dists[j] > 0) or abs(dists[i]) < eps or abs(dists[j]) < eps:
                    if abs(dists[i] - dists[j]) < PARALLEL_EPS:
                        pts.append(proj[i])
                        pts.append(proj[j])
                    else:
                        f = dists[i] / (dists[i] - dists[j])
                        pts.append(proj[i] + f * (proj[j] - proj[i]))
        if not pts:
            return None
        return min(pts), max(pts)

    i1 = interval(t1, d1)
    i2 = interval(t2, d2)
    if i1 is None or i2 is None:
        return False
    lo = max(i1[0], i2[0])
    hi = min(i1[1], i2[1])
    span = max(abs(i1[0]), abs(i1[1]), abs(i2[0]), abs(i2[1]), 1.0)
    return hi - lo > eps * span


class AabbTree:
    """Static AABB tree over a set of boxes, median split on the longest axis.

    Nodes are stored in flat arrays; queries return indices of the original
    items whose boxes pass the corresponding test.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray, leaf_size: int = 8):
        n = lo.shape[0]
        self.item_lo = lo
        self.item_hi = hi
        order = np.arange(n)
        centers = (lo + hi) * 0.5
        node_lo, node_hi, node_left, node_right = [], [], [], []
        node_start, node_count = [], []
        stack = [(0, n, -1, False)]
        while stack:
            start, end, parent, is_right = stack.pop()
            idx = len(node_lo)
            sel = order[start:end]
            node_lo.append(lo[sel].min(axis=0))
            node_hi.append(hi[sel].max(axis=0))
            node_left.append(-1)
            node_right.append(-1)
            if parent >= 0:
                if is_right:
                    node_right[parent] = idx
                else:
                    node_left[parent] = idx
            if end - start <= leaf_size:
                node_start.append(start)
                node_count.append(end - start)
                continue
            node_start.append(-1)
            node_count.append(0)
            cen = centers[sel]
            axis = int((cen.max(axis=0) - cen.min(axis=0)).argmax())
            local = np.argsort(cen[:, axis], kind="stable")
            order[start:end] = sel[local]
            mid = start + (end - start) // 2
            stack.append((mid, end, idx, True))
            stack.append((start, mid, idx, False))
        self.order = order
        self.lo = np.array(node_lo)
        self.hi = np.array(node_hi)
        self.left = np.array(node_left, dtype=np.int32)
        self.right = np.array(node_right, dtype=np.int32)
        self.start = np.array(node_start, dtype=np.int32)
        self.count = np.array(node_count, dtype=np.int32)

    def query_box(self, qlo, qhi, pad: float = 0.0) -> np.ndarray:
        qlo = np.asarray(qlo, dtype=float)
        qhi = np.asarray(qhi, dtype=float)
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if ((self.lo[node] - pad > qhi) | (qlo - pad > self.hi[node])).any():
                continue
            if self.count[node] > 0:
                s = self.start[node]
                items = self.order[s:s + self.count[node]]
                keep = aabbs_overlap(self.item_lo[items], self.item_hi[items], qlo, qhi, pad)
                out.append(items[keep])
            else:
                stack.append(self.left[node])
                stack.append(self.right[node])
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)

    def query_ray(self, origin, direction) -> np.ndarray:
        origin = np.asarray(origin, dtype=float)
        direction = np.asarray(direction, dtype=float)
        with np.errstate(divide="ignore"):
            inv = np.where(direction != 0.0, 1.0 / direction, np.inf)
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            t1 = (self.lo[node] - origin) * inv
            t2 = (self.hi[node] - origin) * inv
            tmin = np.minimum(t1, t2).max()
            tmax = np.maximum(t1, t2).min()
            if tmax < max(tmin, 0.0):
                continue
            if self.count[node] > 0:
                s = self.start[node]
                out.append(self.order[s:s + self.count[node]])
            else:
                stack.append(self.left[node])
                stack.append(self.right[node])
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(out)

    def nearest(self, point, exact_fn):
        """Best-first nearest query. ``exact_fn(items) -> dist_sq`` array."""
        import heapq

        point = np.asarray(point, dtype=float)

        def node_d2(node):
            d = np.maximum(np.maximum(self.lo[node] - point, point - self.hi[node]), 0.0)
            return float((d * d).sum())

        best = np.inf
        best_item = -1
        heap = [(node_d2(0), 0)]
        while heap:
            d2, node = heapq.heappop(heap)
            if d2 >= best:
                continue
            if self.count[node] > 0:
                s = self.start[node]
                items = self.order[s:s + self.count[node]]
                dists = exact_fn(items)
                k = int(np.argmin(dists))
                if dists[k] < best:
                    best = float(dists[k])
                    best_item = int(items[k])
            else:
                for child in (self.left[node], self.right[node]):
                    cd = node_d2(child)
                    if cd < best:
                        heapq.heappush(heap, (cd, int(child)))
        return best_item, best
