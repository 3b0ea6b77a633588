"""Planar geometry: polygon predicates, convex clipping, triangulation."""
from __future__ import annotations

import numpy as np

EPS = 1e-12


def polygon_area(pts: np.ndarray) -> float:
    """Signed area; positive for counter-clockwise winding."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_polygon(point, pts: np.ndarray) -> bool:
    """Crossing-number test; boundary points may land on either side."""
    x, y = float(point[0]), float(point[1])
    pts = np.asarray(pts, dtype=float)
    j = len(pts) - 1
    inside = False
    for i in range(len(pts)):
        xi, yi = pts[i]
        xj, yj = pts[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) / (yj - yi) * (xj - xi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def convex_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of ``subject`` by convex CCW polygon ``clip``."""
    output = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inputs = output
        output = []
        prev = inputs[-1]
        prev_side = side(prev)
        for cur in inputs:
            cur_side = side(cur)
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.asarray(output, dtype=float).reshape(-1, 2)


def convex_overlap_area(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection area of two convex polygons (any winding)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if polygon_area(a) < 0:
        a = a[::-1]
    if polygon_area(b) < 0:
        b = b[::-1]
    inter = convex_clip(a, b)
    if len(inter) < 3:
        return 0.0
    return abs(polygon_area(inter))


def segments_properly_intersect(a0, a1, b0, b1, eps: float = EPS) -> bool:
    d1 = np.asarray(a1) - np.asarray(a0)
    d2 = np.asarray(b1) - np.asarray(b0)
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < eps:
        return False
    r = np.asarray(b0) - np.asarray(a0)
    s = (r[0] * d2[1] - r[1] * d2[0]) / den
    t = (r[0] * d1[1] - r[1] * d1[0]) / den
    return eps < s < 1 - eps and eps < t < 1 - eps


def _is_ear(pts, idx, i_prev, i_cur, i_next):
    a, b, c = pts[i_prev], pts[i_cur], pts[i_next]
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if cross <= EPS:
        return False
    for j in idx:
        if j in (i_prev, i_cur, i_next):
            continue
        p = pts[j]
        # strict point-in-triangle
        s1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        s2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
        s3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
        if s1 >= -EPS and s2 >= -EPS and s3 >= -EPS:
            return False
    return True


def triangulate_simple(pts: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple CCW polygon; returns index triples."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    if n < 3:
        return []
    idx = list(range(n))
    tris: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3 and guard < 5 * n * n:
        guard += 1
        ear_found = False
        for k in range(len(idx)):
            i_prev = idx[k - 1]
            i_cur = idx[k]
            i_next = idx[(k + 1) % len(idx)]
            if _is_ear(pts, idx, i_prev, i_cur, i_next):
                tris.append((i_prev, i_cur, i_next))
                idx.pop(k)
                ear_found = True
                break
        if not ear_found:
            # fall back on the least-reflex corner to stay total
            best_k, best_cross = 0, -np.inf
            for k in range(len(idx)):
                a, b, c = pts[idx[k - 1]], pts[idx[k]], pts[idx[(k + 1) % len(idx)]]
                cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if cr > best_cross:
                    best_cross, best_k = cr, k
            tris.append((idx[best_k - 1], idx[best_k], idx[(best_k + 1) % len(idx)]))
            idx.pop(best_k)
    if len(idx) == 3:
        tris.append((idx[0], idx[1], idx[2]))
    return tris


def _bridge_hole(outer: list[int], hole: list[int], pts: np.ndarray) -> list[int]:
    """Splice ``hole`` into ``outer`` via a mutually visible vertex pair.

    Standard max-x bridge: take the hole vertex with the largest x and connect
    it to a visible vertex of the outer ring.
    """
    hk = max(range(len(hole)), key=lambda k: (pts[hole[k]][0], pts[hole[k]][1]))
    hv = hole[hk]
    hp = pts[hv]

    def visible(ov):
        op = pts[ov]
        for ring in (outer, hole):
            m = len(ring)
            for i in range(m):
                a, b = ring[i], ring[(i + 1) % m]
                if a in (ov, hv) or b in (ov, hv):
                    continue
                if segments_properly_intersect(hp, op, pts[a], pts[b]):
                    return False
        return True

    candidates = sorted(
        range(len(outer)),
        key=lambda k: (pts[outer[k]][0] - hp[0]) ** 2 + (pts[outer[k]][1] - hp[1]) ** 2,
    )
    ok = None
    for k in candidates:
        if pts[outer[k]][0] >= hp[0] - EPS and visible(outer[k]):
            ok = k
            break
    if ok is None:
        for k in candidates:
            if visible(outer[k]):
                ok = k
                break
    if ok is None:
        ok = candidates[0]
    # outer[..ok], hole[hk..], hole[..hk], outer[ok..]
    return outer[: ok + 1] + hole[hk:] + hole[: hk + 1] + outer[ok:]


def triangulate_with_holes(
    outer_pts: np.ndarray,
    outer_ids: list[int],
    holes: list[tuple[np.ndarray, list[int]]],
) -> list[tuple[int, int, int]]:
    """Triangulate a CCW outer polygon with CW holes.

    ``outer_ids``/hole ids are caller vertex ids attached to each point; the
    result references those ids. Holes are spliced in with bridge edges and
    the combined simple polygon is ear-clipped.
    """
    all_pts = [tuple(p) for p in np.asarray(outer_pts, dtype=float)]
    ids = list(outer_ids)
    ring = list(range(len(all_pts)))
    hole_rings = []
    for hp, hid in holes:
        base = len(all_pts)
        all_pts += [tuple(p) for p in np.asarray(hp, dtype=float)]
        ids += list(hid)
        hole_rings.append(list(range(base, base + len(hp))))
    pts = np.asarray(all_pts, dtype=float)
    # splice holes by decreasing max x so bridges cannot cross later holes
    hole_rings.sort(key=lambda ring_: -max(pts[i][0] for i in ring_))
    for hole in hole_rings:
        ring = _bridge_hole(ring, hole, pts)
    local = triangulate_simple(pts[ring])
    return [(ids[ring[a]], ids[ring[b]], ids[ring[c]]) for a, b, c in local]


def zipper_annulus(
    outer_pts: np.ndarray,
    outer_ids: list[int],
    hole_pts: np.ndarray,
    hole_ids: list[int],
) -> list[tuple[int, int, int]]:
    """Stitch a CCW outer loop to a CCW hole loop with an advancing front.

    Both loops are walked in the same rotational direction starting from the
    globally closest vertex pair; at each step the smaller-area triangle is
    emitted. Output triangles are CCW, reference caller vertex ids, and use
    every boundary edge exactly once.
    """
    op = np.asarray(outer_pts, dtype=float)
    hp = np.asarray(hole_pts, dtype=float)
    d2 = ((op[:, None, :] - hp[None, :, :]) ** 2).sum(axis=2)
    i0, j0 = np.unravel_index(int(d2.argmin()), d2.shape)
    n_o, n_h = len(op), len(hp)

    def tri_area(a, b, c):
        return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    tris: list[tuple[int, int, int]] = []
    i, j = int(i0), int(j0)
    used_o, used_h = 0, 0
    while used_o < n_o or used_h < n_h:
        ni = (i + 1) % n_o
        nj = (j + 1) % n_h
        # never consume one loop entirely before the other has started, or
        # the start spoke would be pinched by four triangles
        can_o = used_o < n_o and not (used_o == n_o - 1 and used_h == 0)
        can_h = used_h < n_h and not (used_h == n_h - 1 and used_o == 0)
        if can_o and can_h:
            advance_outer = tri_area(op[i], op[ni], hp[j]) <= tri_area(op[i], hp[nj], hp[j])
        else:
            advance_outer = can_o
        if advance_outer:
            tris.append((outer_ids[i], outer_ids[ni], hole_ids[j]))
            i = ni
            used_o += 1
        else:
            tris.append((outer_ids[i], hole_ids[nj], hole_ids[j]))
            j = nj
            used_h += 1
    return tris
