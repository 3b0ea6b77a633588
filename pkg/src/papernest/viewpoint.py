"""Entropy-based best-view search over a sampled sphere of directions.

A direction points from the scene toward the camera; the scene is rendered
orthographically into an item buffer and the Shannon entropy of the visible
projected-area fractions (plus background) scores the view.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import raster
from .errors import DomainError
from .mesh import TriMesh, merged

DEFAULT_SAMPLES = 256
DEFAULT_RESOLUTION = 512
FRAME_MARGIN = 1.2  # view window = bounding sphere radius x this

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class ViewSample:
    """One evaluated direction with its entropy and visible-area fractions."""

    direction: np.ndarray
    entropy: float
    visible_areas: list[tuple[int, float]]  # (face id, fraction); -1 = background


@dataclass(frozen=True)
class ViewRanking:
    """View samples in descending entropy order."""

    samples: list[ViewSample]

    @property
    def best(self) -> ViewSample:
        return self.samples[0]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def to_report(self, top: int = 10) -> list[dict]:
        return [
            {"direction": [round(float(x), 6) for x in s.direction], "entropy": float(s.entropy)}
            for s in self.samples[:top]
        ]


def sample_directions(n: int) -> np.ndarray:
    """Deterministic Fibonacci-sphere distribution of ``n`` unit directions."""
    if n < 2:
        raise DomainError("need at least 2 directions")
    if n == 2:
        return np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * _GOLDEN_ANGLE
    dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def visible_face_fractions(
    scene: Sequence[TriMesh] | TriMesh,
    direction,
    resolution: int = DEFAULT_RESOLUTION,
    frame_halfwidth: float | None = None,
) -> list[tuple[int, float]]:
    """Projected-area fraction per visible face from one direction.

    Faces across the scene's meshes are numbered consecutively; the entry with
    id -1 is the uncovered background. Fractions sum to 1.
    """
    meshes = [scene] if isinstance(scene, TriMesh) else list(scene)
    combined = meshes[0] if len(meshes) == 1 else merged(meshes)
    center = combined.vertices.mean(axis=0)
    if frame_halfwidth is None:
        radius = float(np.linalg.norm(combined.vertices - center, axis=1).max())
        frame_halfwidth = FRAME_MARGIN * max(radius, 1e-12)
    pts2d, depth = raster.project_vertices(combined.vertices, direction, center)
    lo = np.array([-frame_halfwidth, -frame_halfwidth])
    hi = np.array([frame_halfwidth, frame_halfwidth])
    item, _ = raster.rasterize(pts2d, depth, combined.faces, resolution, resolution, lo, hi)
    counts = np.bincount(item.ravel() + 1, minlength=combined.n_faces + 1)
    total = float(resolution * resolution)
    out: list[tuple[int, float]] = [(-1, counts[0] / total)]
    for fid in np.nonzero(counts[1:])[0]:
        out.append((int(fid), counts[fid + 1] / total))
    return out


def viewpoint_entropy(fractions) -> float:
    """Shannon entropy (natural log) of a fraction distribution.

    Accepts either plain fractions or (face id, fraction) pairs; zero
    fractions contribute nothing (0 log 0 := 0).
    """
    vals = np.asarray(
        [f[1] for f in fractions] if len(fractions) and isinstance(fractions[0], (tuple, list)) else fractions,
        dtype=float,
    )
    if (vals < 0).any():
        raise DomainError("fractions must be non-negative")
    pos = vals[vals > 0]
    return float(-(pos * np.log(pos)).sum())


def best_viewpoint(
    level_meshes: Sequence[TriMesh],
    n_samples: int = DEFAULT_SAMPLES,
    resolution: int = DEFAULT_RESOLUTION,
    workers: int = 1,
) -> ViewRanking:
    """Evaluate all sampled directions on the level's meshes, ranked by entropy.

    The inner level is rendered in isolation. Ties break toward the
    lexicographically smaller direction, making the ranking deterministic.
    """
    dirs = sample_directions(n_samples)

    def evaluate(d):
        fractions = visible_face_fractions(level_meshes, d, resolution)
        return ViewSample(direction=d, entropy=viewpoint_entropy(fractions), visible_areas=fractions)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(evaluate, dirs))
    else:
        samples = [evaluate(d) for d in dirs]
    samples.sort(key=lambda s: (-s.entropy, s.direction[0], s.direction[1], s.direction[2]))
    return ViewRanking(samples=samples)
