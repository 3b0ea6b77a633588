"""Software orthographic rasterizer with item and depth buffers.

Used by the viewpoint-entropy sampler (item buffer) and by the texture
projector (depth buffer). Pixel centers are sampled; triangles are filled by
barycentric tests on their pixel bounding box; the nearest fragment wins.
"""
from __future__ import annotations

import numpy as np


def orthonormal_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right/up basis orthogonal to ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(helper, d)
    right /= np.linalg.norm(right)
    up = np.cross(d, right)
    return right, up


def rasterize(
    pts2d: np.ndarray,
    depth: np.ndarray,
    faces: np.ndarray,
    width: int,
    height: int,
    lo: np.ndarray,
    hi: np.ndarray,
):
    """Z-buffer rasterization of projected triangles.

    ``pts2d`` are (V, 2) coordinates, ``depth`` per-vertex camera depth
    (smaller is closer), ``lo``/``hi`` the world-space window mapped onto a
    ``width`` x ``height`` buffer. Returns ``(item, zbuf)`` where ``item`` holds
    the face index per pixel (-1 for background).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    sx = width / span[0]
    sy = height / span[1]
    item = np.full((height, width), -1, dtype=np.int32)
    zbuf = np.full((height, width), np.inf)
    px = (pts2d[:, 0] - lo[0]) * sx  # pixel-space coordinates
    py = (pts2d[:, 1] - lo[1]) * sy
    for fi, (a, b, c) in enumerate(faces):
        ax, ay, az = px[a], py[a], depth[a]
        bx, by, bz = px[b], py[b], depth[b]
        cx, cy, cz = px[c], py[c], depth[c]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        x0 = max(int(np.floor(min(ax, bx, cx) - 0.5)), 0)
        x1 = min(int(np.ceil(max(ax, bx, cx) + 0.5)), width - 1)
        y0 = max(int(np.floor(min(ay, by, cy) - 0.5)), 0)
        y1 = min(int(np.ceil(max(ay, by, cy) + 0.5)), height - 1)
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        w0 = ((bx - ax) * (gy - ay) - (by - ay) * (gx - ax)) / area
        w1 = ((cx - bx) * (gy - by) - (cy - by) * (gx - bx)) / area
        w2 = 1.0 - w0 - w1
        mask = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not mask.any():
            continue
        z = w1 * az + w2 * bz + w0 * cz
        sub_z = zbuf[y0:y1 + 1, x0:x1 + 1]
        sub_i = item[y0:y1 + 1, x0:x1 + 1]
        closer = mask & (z < sub_z)
        sub_z[closer] = z[closer]
        sub_i[closer] = fi
    return item, zbuf


def project_vertices(vertices: np.ndarray, direction: np.ndarray, center: np.ndarray):
    """Project onto the plane orthogonal to ``direction`` (toward the camera).

    Returns ``(pts2d, depth)``; depth decreases toward the camera located on
    the ``+direction`` side of the scene.
    """
    right, up = orthonormal_frame(direction)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    rel = vertices - np.asarray(center, dtype=float)
    pts2d = np.stack([rel @ right, rel @ up], axis=1)
    depth = -(rel @ d)
    return pts2d, depth
