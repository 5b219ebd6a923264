"""Scalp mesh: canonical procedural scalp and area-uniform root sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

# Canonical head: 0.25 m tall, centered at the origin, +Z facing forward.
# The scalp is the upper part of an ellipsoid clipped by a tilted hairline
# plane (higher at the forehead, lower at the nape).
HEAD_HEIGHT = 0.25
SCALP_SEMI_AXES = (0.085, 0.10, 0.095)
SCALP_CENTER = np.array([0.0, 0.025, 0.0])
SCALP_APEX = np.array([0.0, 0.125, 0.0])
_HAIRLINE_TILT = 0.6   # plane y - tilt*z >= offset
_HAIRLINE_OFFSET = -0.015


@dataclass(frozen=True)
class Scalp:
    """Triangle mesh restricted to the scalp, with per-vertex unit normals."""

    vertices: np.ndarray   # (v, 3) float64
    triangles: np.ndarray  # (t, 3) int indices
    normals: np.ndarray    # (v, 3) float64, unit

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        t = np.asarray(self.triangles, dtype=np.int64)
        n = np.asarray(self.normals, dtype=np.float64)
        if len(t) == 0:
            raise ValueError("scalp mesh has no triangles")
        norms = np.linalg.norm(n, axis=1)
        if np.abs(norms - 1.0).max() > 1e-5:
            raise ValueError("scalp normals must be unit length within 1e-5")
        if triangle_areas(v, t).min() <= 0:
            raise ValueError("scalp mesh contains zero-area triangles")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)

    def nearest_normals(self, points: np.ndarray) -> np.ndarray:
        """Unit normal of the nearest scalp vertex for each query point."""
        tree = cKDTree(self.vertices)
        _, idx = tree.query(np.atleast_2d(points))
        return self.normals[idx]


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _ellipsoid_normal(p: np.ndarray) -> np.ndarray:
    """Outward unit normal of the canonical scalp ellipsoid at surface points."""
    ax, ay, az = SCALP_SEMI_AXES
    q = (p - SCALP_CENTER) / np.array([ax * ax, ay * ay, az * az])
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonical_scalp(n_azimuth: int = 48, n_rings: int = 20) -> Scalp:
    """Procedural canonical scalp: upper ellipsoid clipped at the hairline.

    Built as a latitude/longitude tessellation with a vertex fan at the
    apex; triangles whose vertices fall below the hairline plane are
    discarded.
    """
    ax, ay, az = SCALP_SEMI_AXES
    verts = [SCALP_CENTER + np.array([0.0, ay, 0.0])]
    for r in range(1, n_rings + 1):
        # polar angle sweeps past the equator so the hairline does the clipping
        phi = (r / n_rings) * (0.72 * np.pi)
        for k in range(n_azimuth):
            th = 2.0 * np.pi * k / n_azimuth
            verts.append(SCALP_CENTER + np.array([
                ax * np.sin(phi) * np.sin(th),
                ay * np.cos(phi),
                az * np.sin(phi) * np.cos(th),
            ]))
    verts = np.asarray(verts)

    tris = []
    for k in range(n_azimuth):            # apex fan
        tris.append([0, 1 + k, 1 + (k + 1) % n_azimuth])
    for r in range(n_rings - 1):          # quad rings
        base0 = 1 + r * n_azimuth
        base1 = base0 + n_azimuth
        for k in range(n_azimuth):
            k1 = (k + 1) % n_azimuth
            tris.append([base0 + k, base1 + k, base1 + k1])
            tris.append([base0 + k, base1 + k1, base0 + k1])
    tris = np.asarray(tris, dtype=np.int64)

    above = verts[:, 1] - _HAIRLINE_TILT * verts[:, 2] >= _HAIRLINE_OFFSET
    keep = above[tris].all(axis=1)
    tris = tris[keep]
    used = np.unique(tris)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Scalp(verts[used], remap[tris], _ellipsoid_normal(verts[used]))


def sample_scalp_roots(scalp: Scalp, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform root sampling, deterministic for a fixed seed.

    Triangles are chosen proportionally to area, then a uniform barycentric
    point is drawn in each. Returns (positions (n, 3), unit normals (n, 3)).
    """
    if n < 1:
        raise ValueError("need n >= 1 roots")
    rng = np.random.default_rng(seed)
    areas = triangle_areas(scalp.vertices, scalp.triangles)
    tri_idx = rng.choice(len(areas), size=n, p=areas / areas.sum())
    # Osada et al. uniform barycentric coordinates
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)
    tri = scalp.triangles[tri_idx]
    pos = np.einsum("nk,nkc->nc", w, scalp.vertices[tri])
    nrm = np.einsum("nk,nkc->nc", w, scalp.normals[tri])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    return pos, nrm
