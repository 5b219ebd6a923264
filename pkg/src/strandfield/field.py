"""Hybrid growth field: a dense voxel grid of 3D vectors that are unit
tangents inside the hair volume and exactly zero outside, so a single
representation carries both growth direction and occupancy.

Baking, trilinear sampling, the magnitude-threshold occupancy rule, the
field quality metrics, and the .hfld file format live here. Fields are
immutable after construction and safe to sample from any thread.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .strands import HairModel

HFLD_MAGIC = b"HFLD"
OCCUPANCY_TAU = 0.1          # |d| above this counts as inside the hair volume
CANCEL_EPS = 1e-6            # mean tangents below this fall back to nearest segment
DEFAULT_RESOLUTION = (128, 128, 128)
AABB_MARGIN = 0.10           # auto box: strand bounds expanded by 10%


@dataclass(frozen=True)
class GridSpec:
    """Discretization request for baking: per-axis resolution, world box,
    and the strand influence radius. aabb=None derives the box from the
    model bounds plus a 10% margin; tube_radius=None uses 1.5 voxel
    diagonals so thin strands never fall between voxel centers."""

    resolution: tuple = DEFAULT_RESOLUTION
    aabb: np.ndarray | None = None
    tube_radius: float | None = None

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolution)
        if len(res) != 3 or min(res) < 8:
            raise ValueError("grid resolution must be >= 8 per axis")
        object.__setattr__(self, "resolution", res)
        if self.tube_radius is not None and self.tube_radius <= 0:
            raise ValueError("tube_radius must be > 0")
        if self.aabb is not None:
            box = np.asarray(self.aabb, dtype=np.float64).reshape(2, 3)
            if not (box[1] > box[0]).all():
                raise ValueError("aabb must have positive extent on all axes")
            object.__setattr__(self, "aabb", box)


class HybridField:
    """Voxel grid of growth vectors over an axis-aligned box.

    The box is canonicalized to float32 so .hfld round-trips are bit-exact.
    Voxel (ix, iy, iz) has its center at aabb_min + (i + 0.5) * voxel_size.
    """

    def __init__(self, vectors: np.ndarray, aabb: np.ndarray):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 4 or vectors.shape[3] != 3:
            raise ValueError("vectors must have shape (nx, ny, nz, 3)")
        box = np.asarray(aabb, dtype=np.float32).reshape(2, 3)
        if not (box[1] > box[0]).all():
            raise ValueError("aabb must have positive extent on all axes")
        self.vectors = vectors
        self.aabb = box
        self._pad = None
        self._boundary_clear = None

    @property
    def resolution(self) -> tuple:
        return self.vectors.shape[:3]

    @property
    def voxel_size(self) -> np.ndarray:
        lo, hi = self.aabb.astype(np.float64)
        return (hi - lo) / np.asarray(self.resolution, dtype=np.float64)

    def magnitudes(self) -> np.ndarray:
        v = self.vectors.astype(np.float64)
        return np.sqrt((v * v).sum(axis=3))

    def _padded(self):
        # edge-replicated padding keeps boundary interpolation branch-free:
        # inside the outer half-voxel band the value clamps to the edge
        # voxel; the exact-zero-outside rule is applied by mask afterwards
        if self._pad is None:
            nx, ny, nz = self.resolution
            pad = np.pad(self.vectors, ((1, 1), (1, 1), (1, 1), (0, 0)), mode="edge")
            flat = pad.reshape(-1, 3)
            sy = nz + 2
            sx = (ny + 2) * (nz + 2)
            lo, hi = self.aabb.astype(np.float64)
            self._pad = (flat, sx, sy, lo, hi, self.voxel_size,
                         np.array([nx, ny, nz], dtype=np.int64),
                         lo.astype(np.float32),
                         (1.0 / self.voxel_size).astype(np.float32))
        return self._pad

    @property
    def boundary_clear(self) -> bool:
        """True when every voxel on the outer shell is exactly zero, so
        samplers may skip the explicit outside-the-box mask (clipped
        indices then read zeros anyway). Baked fields with their default
        10% box margin always satisfy this."""
        if self._boundary_clear is None:
            v = self.vectors
            self._boundary_clear = bool(
                not v[0].any() and not v[-1].any()
                and not v[:, 0].any() and not v[:, -1].any()
                and not v[:, :, 0].any() and not v[:, :, -1].any())
        return self._boundary_clear


def _sample32(f: HybridField, pts: np.ndarray, masked: bool = True) -> np.ndarray:
    """Core trilinear gather for an (n, 3) batch; float32 result with exact
    zeros outside the box. float32 weights halve the memory traffic of the
    8-corner gather and the grid itself is float32, so no value precision
    is lost. masked=False skips the outside-the-box zeroing; only valid
    when the field's boundary shell is clear."""
    flat, sx, sy, lo, hi, vox, res, lo32, inv_vox32 = f._padded()
    if pts.dtype == np.float32:
        t = (pts - lo32) * inv_vox32 - np.float32(0.5)
    else:
        t = (pts - lo) / vox - 0.5
    i0 = np.floor(t)
    frac = t - i0 if t.dtype == np.float32 else (t - i0).astype(np.float32)
    idx = i0.astype(np.int64)
    np.clip(idx, -1, res - 1, out=idx)
    base = (idx[:, 0] + 1) * sx + (idx[:, 1] + 1) * sy + (idx[:, 2] + 1)

    fx, fy, fz = frac[:, 0:1], frac[:, 1:2], frac[:, 2:3]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    out = np.take(flat, base, axis=0) * (gx * gy * gz)
    out += np.take(flat, base + sx, axis=0) * (fx * gy * gz)
    out += np.take(flat, base + sy, axis=0) * (gx * fy * gz)
    out += np.take(flat, base + 1, axis=0) * (gx * gy * fz)
    out += np.take(flat, base + sx + sy, axis=0) * (fx * fy * gz)
    out += np.take(flat, base + sx + 1, axis=0) * (fx * gy * fz)
    out += np.take(flat, base + sy + 1, axis=0) * (gx * fy * fz)
    out += np.take(flat, base + sx + sy + 1, axis=0) * (fx * fy * fz)

    if masked:
        inside = ((pts >= lo) & (pts <= hi)).all(axis=1)
        out[~inside] = 0.0
    return out


def sample_field(f: HybridField, points: np.ndarray) -> np.ndarray:
    """Trilinear sample of the growth field; exact zeros outside the box.

    Accepts a single point (3,) or a batch (n, 3); float64 result of the
    same leading shape.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = _sample32(f, pts).astype(np.float64)
    return out[0] if single else out


def occupancy(f: HybridField, points: np.ndarray, tau: float = OCCUPANCY_TAU):
    """Inside-the-hair-volume predicate: |sampled vector| > tau."""
    v = sample_field(f, points)
    mag = np.sqrt((v * v).sum(axis=-1))
    return mag > tau


# ----------------------------------------------------------------------
# Baking
# ----------------------------------------------------------------------

def _gather_segments(model: HairModel, max_len: float):
    """All polyline segments of the model, subdivided to length <= max_len.

    Subdivision preserves the polyline path exactly and copies the parent
    segment's direction, so distances are exact and the per-voxel tangent
    average becomes arc-length weighted. Returns (starts, ends, unit dirs).
    """
    counts = np.array([len(s.points) for s in model.strands])
    if not (counts >= 2).any():
        raise ValueError("cannot bake an empty model")
    pts = np.concatenate([s.points for s in model.strands]).astype(np.float64)
    is_last = np.zeros(len(pts), dtype=bool)
    is_last[np.cumsum(counts) - 1] = True
    start = np.flatnonzero(~is_last)
    a = pts[start]
    b = pts[start + 1]
    seg_len = np.linalg.norm(b - a, axis=1)
    n_sub = np.maximum(1, np.ceil(seg_len / max_len).astype(np.int64))
    parent = np.repeat(np.arange(len(a)), n_sub)
    sub_start = np.concatenate([[0], np.cumsum(n_sub)[:-1]])
    local = np.arange(int(n_sub.sum())) - sub_start[parent]
    frac0 = local / n_sub[parent]
    frac1 = (local + 1) / n_sub[parent]
    d = b - a
    sub_a = a[parent] + d[parent] * frac0[:, None]
    sub_b = a[parent] + d[parent] * frac1[:, None]
    tang = d / seg_len[:, None]
    return sub_a, sub_b, tang[parent]


def bake_field(model: HairModel, spec: GridSpec | None = None) -> HybridField:
    """Bake ground-truth strands into a hybrid field.

    Every voxel whose center lies within tube_radius of a strand polyline
    receives the renormalized average of the directed tangents of all
    segments within radius (exact point-to-segment distances); all other
    voxels are exactly zero. Averages that cancel below 1e-6 fall back to
    the nearest segment's tangent.
    """
    spec = spec or GridSpec()
    if not model.strands:
        raise ValueError("cannot bake an empty model")
    res = np.asarray(spec.resolution)
    nx, ny, nz = (int(v) for v in res)

    bounds = model.bounds
    if spec.aabb is None:
        span = bounds[1] - bounds[0]
        # flat or linear models would otherwise produce degenerate voxels
        span = np.maximum(span, max(1e-3, 0.25 * float(span.max())))
        center = 0.5 * (bounds[0] + bounds[1])
        half = (0.5 + AABB_MARGIN) * span
        box = np.stack([center - half, center + half])
    else:
        box = np.stack([np.minimum(spec.aabb[0], bounds[0]),
                        np.maximum(spec.aabb[1], bounds[1])])
    box = box.astype(np.float32)
    lo, hi = box.astype(np.float64)
    vox = (hi - lo) / res
    diag = float(np.linalg.norm(vox))
    radius = spec.tube_radius if spec.tube_radius is not None else 1.5 * diag

    sub_a, sub_b, tang = _gather_segments(model, max_len=float(vox.min()))
    mid = 0.5 * (sub_a + sub_b)
    anchor = np.floor((mid - lo) / vox).astype(np.int64)
    np.clip(anchor, 0, res - 1, out=anchor)
    # canonical spatial order: defined result independent of strand order
    # up to floating accumulation, and cache-friendly accumulation spans
    sy = nz
    sx = ny * nz
    anchor_flat = anchor[:, 0] * sx + anchor[:, 1] * sy + anchor[:, 2]
    order = np.argsort(anchor_flat, kind="stable")
    sub_a, sub_b, tang, anchor, anchor_flat = (
        sub_a[order], sub_b[order], tang[order], anchor[order], anchor_flat[order])

    # integer offsets around the anchor that can possibly reach the capsule:
    # |offset*vox| <= radius + max_sub_len/2 + half voxel diagonal
    reach = radius + 0.5 * float(vox.min()) + 0.5 * diag
    half = np.ceil(reach / vox).astype(np.int64)
    ox, oy, oz = np.meshgrid(*(np.arange(-h, h + 1) for h in half), indexing="ij")
    offs = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
    off_world = offs * vox
    keep = np.linalg.norm(off_world, axis=1) <= reach
    offs = offs[keep]
    off_world = off_world[keep]
    off_flat = offs[:, 0] * sx + offs[:, 1] * sy + offs[:, 2]
    off_sq = (off_world * off_world).sum(axis=1)

    count = np.zeros(nx * ny * nz, dtype=np.float64)
    acc = np.zeros((nx * ny * nz, 3), dtype=np.float64)
    r_sq = np.float32(radius * radius)
    chunk = 16384
    centers0 = lo + (anchor + 0.5) * vox
    off_w32 = off_world.astype(np.float32)
    off_sq32 = off_sq.astype(np.float32)
    for s0 in range(0, len(sub_a), chunk):
        s1 = min(s0 + chunk, len(sub_a))
        a = sub_a[s0:s1]
        ab = (sub_b[s0:s1] - a).astype(np.float32)
        ll = (ab * ab).sum(axis=1)
        base = (centers0[s0:s1] - a).astype(np.float32)   # (c, 3)
        # q = base + off_world; expand |q|^2 and q.ab without a (c,k,3) temp
        qq = ((base * base).sum(axis=1)[:, None]
              + np.float32(2.0) * (base @ off_w32.T) + off_sq32[None, :])
        qab = (base * ab).sum(axis=1)[:, None] + ab @ off_w32.T
        t = qab / np.maximum(ll, np.float32(1e-30))[:, None]
        np.clip(t, 0.0, 1.0, out=t)
        d_sq = qq - np.float32(2.0) * t * qab + t * t * ll[:, None]
        hit = d_sq <= r_sq
        an = anchor[s0:s1]
        clipped = ((an.min(axis=0) < half) | (an.max(axis=0) + half >= res)).any()
        if clipped:
            # drop hits whose voxel falls outside the grid
            for ax, n_ax in enumerate((nx, ny, nz)):
                cell_ax = an[:, ax, None] + offs[None, :, ax]
                hit &= (cell_ax >= 0) & (cell_ax < n_ax)
        rows, cols = np.nonzero(hit)
        if len(rows) == 0:
            continue
        vox_idx = anchor_flat[s0:s1][rows] + off_flat[cols]
        lo_i = int(vox_idx.min())
        span = int(vox_idx.max()) - lo_i + 1
        local = vox_idx - lo_i
        count[lo_i:lo_i + span] += np.bincount(local, minlength=span)
        tseg = tang[s0:s1][rows]
        for c in range(3):
            acc[lo_i:lo_i + span, c] += np.bincount(
                local, weights=tseg[:, c], minlength=span)

    occupied = count > 0
    mean = np.zeros_like(acc)
    mean[occupied] = acc[occupied] / count[occupied, None]
    mag = np.linalg.norm(mean, axis=1)
    cancelled = occupied & (mag < CANCEL_EPS)
    good = occupied & ~cancelled
    vectors = np.zeros((nx * ny * nz, 3), dtype=np.float64)
    vectors[good] = mean[good] / mag[good, None]
    if cancelled.any():
        vectors[cancelled] = _nearest_segment_tangents(
            np.flatnonzero(cancelled), lo, vox, (sx, sy), sub_a, sub_b, tang)
    return HybridField(vectors.reshape(nx, ny, nz, 3).astype(np.float32), box)


def _nearest_segment_tangents(flat_idx, lo, vox, strides, sub_a, sub_b, tang):
    """Exact nearest-segment tangent for voxels whose average cancelled."""
    from scipy.spatial import cKDTree

    sx, sy = strides
    ix = flat_idx // sx
    iy = (flat_idx - ix * sx) // sy
    iz = flat_idx - ix * sx - iy * sy
    centers = lo + (np.stack([ix, iy, iz], axis=1) + 0.5) * vox
    mid = 0.5 * (sub_a + sub_b)
    tree = cKDTree(mid)
    k = min(64, len(mid))
    _, cand = tree.query(centers, k=k)
    cand = np.atleast_2d(cand)
    out = np.zeros((len(flat_idx), 3))
    for i, c in enumerate(centers):
        segs = cand[i]
        a = sub_a[segs]
        ab = sub_b[segs] - a
        ll = np.maximum((ab * ab).sum(axis=1), 1e-300)
        t = np.clip(((c - a) * ab).sum(axis=1) / ll, 0.0, 1.0)
        d = np.linalg.norm(c - (a + ab * t[:, None]), axis=1)
        # ties resolve to the lowest candidate segment index
        best = segs[np.lexsort((segs, d))[0]]
        out[i] = tang[best]
    return out


# ----------------------------------------------------------------------
# Field quality metrics
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FieldOrientationStats:
    l1_mean: float   # mean over samples of |d* - d|_1 / 3
    mse: float       # mean squared error over samples and components
    n_samples: int


def field_orientation_mse(pred: HybridField, gt: HybridField,
                          n_samples: int = 10_000, seed: int = 0,
                          tau: float = OCCUPANCY_TAU) -> FieldOrientationStats:
    """Orientation agreement over points sampled inside gt's occupied region.

    Rejection sampling is capped at 1000x oversampling; a gt with no
    occupied region raises.
    """
    if not np.array_equal(pred.aabb, gt.aabb):
        raise ValueError("field metrics require matching aabbs")
    rng = np.random.default_rng(seed)
    lo, hi = gt.aabb.astype(np.float64)
    collected = []
    total = 0
    got = 0
    while got < n_samples and total < 1000 * n_samples:
        batch = rng.uniform(lo, hi, size=(n_samples, 3))
        total += n_samples
        inside = batch[occupancy(gt, batch, tau)]
        if len(inside):
            collected.append(inside)
            got += len(inside)
    if got == 0:
        raise ValueError("ground-truth field has no occupied region")
    pts = np.concatenate(collected)[:n_samples]
    delta = sample_field(pred, pts) - sample_field(gt, pts)
    l1 = float(np.abs(delta).sum(axis=1).mean() / 3.0)
    mse = float((delta * delta).mean())
    return FieldOrientationStats(l1_mean=l1, mse=mse, n_samples=len(pts))


def occupancy_iou_precision(pred: HybridField, gt: HybridField,
                            n_samples: int = 100_000, seed: int = 0,
                            tau: float = OCCUPANCY_TAU) -> tuple[float, float]:
    """Monte-Carlo IoU and precision of pred occupancy against gt.

    Sentinels: IoU of two empty sets is 1.0; precision of an empty pred
    is 1.0.
    """
    if not np.array_equal(pred.aabb, gt.aabb):
        raise ValueError("field metrics require matching aabbs")
    rng = np.random.default_rng(seed)
    lo, hi = gt.aabb.astype(np.float64)
    pts = rng.uniform(lo, hi, size=(n_samples, 3))
    po = occupancy(pred, pts, tau)
    go = occupancy(gt, pts, tau)
    inter = int((po & go).sum())
    union = int((po | go).sum())
    iou = inter / union if union else 1.0
    precision = inter / int(po.sum()) if po.any() else 1.0
    return iou, precision


# ----------------------------------------------------------------------
# .hfld file format: "HFLD", u32 nx ny nz, 6*f32 aabb, then
# nx*ny*nz*3 f32 vectors, x-fastest then y then z. Little-endian.
# ----------------------------------------------------------------------

def save_field(f: HybridField, path) -> None:
    nx, ny, nz = f.resolution
    with open(path, "wb") as fh:
        fh.write(HFLD_MAGIC)
        fh.write(struct.pack("<III", nx, ny, nz))
        fh.write(np.ascontiguousarray(f.aabb, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(f.vectors.transpose(2, 1, 0, 3), dtype="<f4").tobytes())


def load_field(path) -> HybridField:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 40:
        raise ValueError(f"truncated .hfld file {path}")
    if data[:4] != HFLD_MAGIC:
        raise ValueError(f"bad magic in {path}: not a .hfld file")
    nx, ny, nz = struct.unpack_from("<III", data, 4)
    n = nx * ny * nz
    if n == 0 or n > 2**31:
        raise ValueError(f"nonsensical field resolution {nx}x{ny}x{nz} in {path}")
    aabb = np.frombuffer(data, dtype="<f4", count=6, offset=16).reshape(2, 3)
    need = 40 + n * 12
    if len(data) < need:
        raise ValueError(f"truncated .hfld file {path}: body shorter than header declares")
    vec = np.frombuffer(data, dtype="<f4", count=n * 3, offset=40)
    vec = vec.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
    return HybridField(np.ascontiguousarray(vec), aabb.copy())
