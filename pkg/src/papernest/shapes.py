"""Canonical procedural meshes used by fixtures, docs, and the pipeline."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh

# 12 outward-wound triangles of the axis-aligned unit box.
_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # z = lo
    [4, 5, 6], [4, 6, 7],  # z = hi
    [0, 1, 5], [0, 5, 4],  # y = lo
    [2, 3, 7], [2, 7, 6],  # y = hi
    [0, 4, 7], [0, 7, 3],  # x = lo
    [1, 2, 6], [1, 6, 5],  # x = hi
], dtype=np.int32)


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> TriMesh:
    """Axis-aligned box with 12 outward-wound triangles."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    verts = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ])
    return TriMesh(verts, _BOX_FACES)


def unit_cube() -> TriMesh:
    return box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def tetrahedron(scale: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Regular tetrahedron with outward winding."""
    v = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]) * scale / np.sqrt(3.0) + np.asarray(center, dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int32)
    return TriMesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Icosahedron refined by midpoint subdivision, projected to a sphere.

    Face count is ``20 * 4**subdivisions``.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vert_list = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = np.asarray(vert_list[i]) + np.asarray(vert_list[j])
                m /= np.linalg.norm(m)
                cache[key] = len(vert_list)
                vert_list.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(vert_list) * radius + np.asarray(center, dtype=float)
    return TriMesh(v, np.asarray(faces, dtype=np.int32))
