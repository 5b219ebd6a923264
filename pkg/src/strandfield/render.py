"""Software z-buffer renderer for strand polylines.

Projects each strand segment into a view and walks every pixel the segment
touches (supercover traversal, so thin lines never skip diagonally). Each
covered pixel keeps the nearest segment's projected direction (mod pi),
camera-space depth, and a mask bit. Depth ties within 1e-7 m resolve to the
lower strand index, then the lower segment index, so repeated renders are
bit-identical regardless of how the work is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView
from .orientation import OrientationMap
from .strands import HairModel

DEPTH_TIE_QUANTUM = 1e-7   # meters; ties inside one quantum go to strand order
_Z_CLIP = 1e-6


@dataclass(frozen=True)
class RenderedView:
    orientation: OrientationMap
    depth: np.ndarray        # (h, w) float32 meters, 0 where no hair
    mask: np.ndarray         # (h, w) bool


# winner priority per pixel packs into one int64 so the z-resolve is a
# single minimum reduction: depth bins (30 bits), strand (19), segment (14)
_SEG_BITS = 14
_SID_BITS = 19
_DQ_LIMIT = (1 << 30) - 1
_SID_LIMIT = (1 << _SID_BITS) - 1
_EMPTY = np.iinfo(np.int64).max


def render_strand_view(model: HairModel, cam: CameraView,
                       chunk_strands: int = 16384) -> RenderedView:
    """Rasterize a model into orientation/depth/mask maps for one view."""
    h, w = cam.height, cam.width
    if len(model.strands) > _SID_LIMIT:
        raise ValueError(f"renderer supports at most {_SID_LIMIT} strands per model")
    best = np.full(h * w, _EMPTY, dtype=np.int64)
    out_depth = np.zeros(h * w, dtype=np.float32)
    out_angle = np.zeros(h * w, dtype=np.float32)

    strands = model.strands
    for c0 in range(0, len(strands), chunk_strands):
        batch = strands[c0:c0 + chunk_strands]
        segs = _project_segments(batch, cam, first_index=c0)
        if segs is None:
            continue
        pix, depth, angle, sid, gid = _supercover_pixels(segs, w, h)
        if len(pix) == 0:
            continue
        _merge(best, out_depth, out_angle, pix, depth, angle, sid, gid)

    mask = (best != _EMPTY).reshape(h, w)
    depth = out_depth.reshape(h, w)
    angle = out_angle.reshape(h, w)
    omap = OrientationMap(angle=np.where(mask, angle, 0.0), mask=mask)
    return RenderedView(orientation=omap, depth=np.where(mask, depth, 0.0).astype(np.float32),
                        mask=mask)


def _project_segments(strands, cam: CameraView, first_index: int):
    """Camera-space segment endpoints for a batch of strands, clipped to
    z > 0 and to the image rectangle. Returns packed arrays or None."""
    counts = np.array([len(s.points) for s in strands])
    if counts.sum() == 0:
        return None
    pts = np.concatenate([s.points for s in strands]).astype(np.float64)
    pc = pts @ cam.rotation.T + cam.translation

    # per-strand consecutive pairs: every point except each strand's last
    offsets = np.concatenate([[0], np.cumsum(counts)])
    is_last = np.zeros(int(counts.sum()), dtype=bool)
    is_last[offsets[1:] - 1] = True
    seg_from = np.flatnonzero(~is_last)
    if len(seg_from) == 0:
        return None
    strand_local = np.repeat(np.arange(len(strands)), counts)[seg_from]
    strand_of = strand_local + first_index
    seg_of = seg_from - offsets[strand_local]

    p0 = pc[seg_from]
    p1 = pc[seg_from + 1]
    z0, z1 = p0[:, 2], p1[:, 2]
    keep = (z0 > _Z_CLIP) | (z1 > _Z_CLIP)
    p0, p1, strand_of, seg_of = p0[keep], p1[keep], strand_of[keep], seg_of[keep]
    z0, z1 = p0[:, 2].copy(), p1[:, 2].copy()
    # clip endpoints behind the camera to the near plane
    cross = (p0[:, 2] <= _Z_CLIP) | (p1[:, 2] <= _Z_CLIP)
    if cross.any():
        t = (_Z_CLIP - p0[cross, 2]) / (p1[cross, 2] - p0[cross, 2])
        at = p0[cross] + (p1[cross] - p0[cross]) * t[:, None]
        lo = p0[cross, 2] <= _Z_CLIP
        p0c, p1c = p0[cross], p1[cross]
        p0c[lo] = at[lo]
        p1c[~lo] = at[~lo]
        p0[cross], p1[cross] = p0c, p1c
        z0, z1 = p0[:, 2], p1[:, 2]

    u0 = cam.fx * p0[:, 0] / z0 + cam.cx
    v0 = cam.fy * p0[:, 1] / z0 + cam.cy
    u1 = cam.fx * p1[:, 0] / z1 + cam.cx
    v1 = cam.fy * p1[:, 1] / z1 + cam.cy

    # Liang-Barsky clip to the image rectangle (1 px apron)
    t0 = np.zeros(len(u0))
    t1 = np.ones(len(u0))
    du, dv = u1 - u0, v1 - v0
    for p, q in (((-du), u0 - (-1.0)), (du, (cam.width + 1.0) - u0),
                 ((-dv), v0 - (-1.0)), (dv, (cam.height + 1.0) - v0)):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = q / p
        entering = p < 0
        leaving = p > 0
        t0 = np.where(entering, np.maximum(t0, r), t0)
        t1 = np.where(leaving, np.minimum(t1, r), t1)
        parallel_out = (p == 0) & (q < 0)
        t1 = np.where(parallel_out, -1.0, t1)
    keep = t0 <= t1
    if not keep.any():
        return None
    t0, t1 = t0[keep], t1[keep]
    u0, v0, u1, v1 = u0[keep], v0[keep], u1[keep], v1[keep]
    z0, z1 = z0[keep], z1[keep]
    du, dv = du[keep], dv[keep]
    strand_of, seg_of = strand_of[keep], seg_of[keep]

    cu0 = u0 + du * t0
    cv0 = v0 + dv * t0
    cu1 = u0 + du * t1
    cv1 = v0 + dv * t1
    cz0 = z0 + (z1 - z0) * t0
    cz1 = z0 + (z1 - z0) * t1
    angle = np.mod(np.arctan2(dv, du), np.pi)
    return cu0, cv0, cu1, cv1, cz0, cz1, angle, strand_of, seg_of


def _supercover_pixels(segs, w: int, h: int):
    """Expand clipped 2D segments into (pixel, depth, angle, ids) samples.

    Every integer x/y gridline crossing emits the pixel entered there; the
    companion coordinate follows in closed form from the crossing time, so
    no per-segment sorting is needed. Depth is interpolated at the entry
    point into each pixel.
    """
    u0, v0, u1, v1, z0, z1, angle, strand_of, seg_of = segs
    m = len(u0)
    ix0 = np.floor(u0).astype(np.int64)
    iy0 = np.floor(v0).astype(np.int64)
    kx = np.abs(np.floor(u1).astype(np.int64) - ix0)
    ky = np.abs(np.floor(v1).astype(np.int64) - iy0)
    du = u1 - u0
    dv = v1 - v0
    sx = np.where(du >= 0, 1, -1)
    sy = np.where(dv >= 0, 1, -1)

    n_events = kx + ky + 1
    total = int(n_events.sum())
    seg_id = np.repeat(np.arange(m), n_events)
    starts = np.concatenate([[0], np.cumsum(n_events)[:-1]])
    local = np.arange(total) - starts[seg_id]

    # event layout per segment: slot 0 is the start pixel, then the kx
    # x-crossings in traversal order, then the ky y-crossings
    is_x = (local >= 1) & (local <= kx[seg_id])
    is_y = local > kx[seg_id]
    px = ix0[seg_id].copy()
    py = iy0[seg_id].copy()
    t_ev = np.zeros(total)

    sid = seg_id[is_x]
    jx = local[is_x]  # 1-based crossing ordinal
    bx = np.where(sx[sid] > 0, ix0[sid] + jx, ix0[sid] - jx + 1).astype(np.float64)
    tx = (bx - u0[sid]) / du[sid]
    ncross_y = np.abs(np.floor(v0[sid] + dv[sid] * tx).astype(np.int64) - iy0[sid])
    px[is_x] = ix0[sid] + sx[sid] * jx
    py[is_x] = iy0[sid] + sy[sid] * np.minimum(ncross_y, ky[sid])
    t_ev[is_x] = tx

    sid = seg_id[is_y]
    jy = local[is_y] - kx[sid]
    by = np.where(sy[sid] > 0, iy0[sid] + jy, iy0[sid] - jy + 1).astype(np.float64)
    ty = (by - v0[sid]) / dv[sid]
    ncross_x = np.abs(np.floor(u0[sid] + du[sid] * ty).astype(np.int64) - ix0[sid])
    py[is_y] = iy0[sid] + sy[sid] * jy
    px[is_y] = ix0[sid] + sx[sid] * np.minimum(ncross_x, kx[sid])
    t_ev[is_y] = ty

    np.clip(t_ev, 0.0, 1.0, out=t_ev)
    depth = z0[seg_id] + (z1[seg_id] - z0[seg_id]) * t_ev
    inside = (px >= 0) & (px < w) & (py >= 0) & (py < h) & (depth > 0)
    pix = py[inside] * w + px[inside]
    src = seg_id[inside]
    return pix, depth[inside], angle[src], strand_of[src], seg_of[src]


def _merge(best, out_depth, out_angle, pix, depth, angle, sid, gid):
    """Fold pixel samples into the running z-buffer deterministically.

    The packed priority orders by (quantized depth, strand, segment); the
    per-pixel minimum is the winner no matter how samples are chunked.
    """
    dq = np.round(depth / DEPTH_TIE_QUANTUM).astype(np.int64)
    if dq.max(initial=0) > _DQ_LIMIT:
        raise ValueError("depth exceeds the z-buffer packing range")
    packed = ((dq << (_SID_BITS + _SEG_BITS)) | (sid << _SEG_BITS)
              | np.minimum(gid, (1 << _SEG_BITS) - 1))
    np.minimum.at(best, pix, packed)
    win = packed == best[pix]
    p = pix[win]
    out_depth[p] = depth[win]
    out_angle[p] = angle[win]


# ----------------------------------------------------------------------
# PFM depth maps: grayscale "Pf", negative scale = little-endian,
# rows stored bottom-up. Depth in meters, 0 encodes "no hair".
# ----------------------------------------------------------------------

def save_depth_pfm(depth: np.ndarray, path) -> None:
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError("depth map must be a 2D array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{d.shape[1]} {d.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(d[::-1]).tobytes())


def load_depth_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM file")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ValueError(f"{path}: bad PFM dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = fh.read(w * h * 4)
        if len(data) < w * h * 4:
            raise ValueError(f"truncated PFM file {path}")
        arr = np.frombuffer(data, dtype=dtype).reshape(h, w)
    return np.ascontiguousarray(arr[::-1]).astype(np.float32)
