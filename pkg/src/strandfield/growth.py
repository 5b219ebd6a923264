"""Two-stage strand growing through a hybrid field.

Stage one integrates scalp-rooted strands in parallel batches; because the
field is zero outside the hair volume, every strand stops on its own at the
boundary and regrowing from an endpoint adds nothing. Stage two fills
coverage gaps with short bidirectional segments seeded inside the volume,
attaches them to the nearest scalp strand, filters unsupported short
strands, and regrows collapsed buzz-cut roots from multi-view orientations.

Every operation here is deterministic: identical inputs, parameters and
seeds give bit-identical output for any thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import binary_dilation
from scipy.spatial import cKDTree

from .camera import CameraView, project, unproject
from .field import HybridField, sample_field
from .orientation import OrientationMap
from .render import render_strand_view
from .scalp import SCALP_APEX
from .strands import HairModel, Strand, clean_points

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthParams:
    """Knobs for deterministic strand integration.

    step=None resolves to half the smallest voxel size of the field being
    grown through, keeping Euler steps sub-voxel.
    """

    step: float | None = None
    max_points: int = 300
    stop_tau: float = 0.1
    min_len_points: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be > 0")
        if self.max_points < 2:
            raise ValueError("max_points must be >= 2")
        if not (0.0 < self.stop_tau < 1.0):
            raise ValueError("stop_tau must be in (0, 1)")

    def resolved(self, f: HybridField) -> "GrowthParams":
        if self.step is not None:
            return self
        return replace(self, step=0.5 * float(f.voxel_size.min()))


@dataclass(frozen=True)
class Segment:
    """Short polyline grown from an interior seed, oriented along the field."""

    points: np.ndarray  # (n, 3) float32, n >= 2

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
            raise ValueError("segment needs at least 2 points")
        object.__setattr__(self, "points", pts)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]


def _integrate_batch(f: HybridField, starts: np.ndarray, step: float,
                     stop_tau: float, max_points: int, sign: float = 1.0):
    """Batched Euler integration: all strands advance in lockstep and drop
    out as they stop. Per-strand arithmetic is elementwise, so results do
    not depend on how the batch is chunked.

    Returns (flat points (total, 3) float32 grouped by strand in input
    order, per-strand lengths, exact point bounds). Points are recorded as
    compact per-step batches and scattered once at the end, which keeps the
    hot loop free of large strided writes.
    """
    from .field import _sample32

    n = len(starts)
    start32 = np.asarray(starts, dtype=np.float32)
    lo = start32.min(axis=0).astype(np.float64)
    hi = start32.max(axis=0).astype(np.float64)
    lengths = np.ones(n, dtype=np.int64)
    pos = start32.copy()
    active = np.arange(n)
    all_alive = True
    steps = []  # (active ids or None when all alive, positions) per step
    masked = not f.boundary_clear
    stop32 = np.float32(stop_tau)
    step32 = np.float32(sign * step)
    for k in range(1, max_points):
        d = _sample32(f, pos, masked=masked)
        mag = np.sqrt(np.einsum("ij,ij->i", d, d))
        go = mag > stop32
        n_go = int(np.count_nonzero(go))
        if n_go == 0:
            break
        if n_go != len(go):
            if all_alive:
                all_alive = False
            active = active[go]
            pos = pos[go]
            d = d[go]
            mag = mag[go]
            lengths[active] = k + 1
        else:
            lengths[active] += 1
        pos = pos + d * (step32 / mag)[:, None]
        steps.append((None if all_alive else active, pos))
        np.minimum(lo, pos.min(axis=0), out=lo)
        np.maximum(hi, pos.max(axis=0), out=hi)

    offsets = np.concatenate([[0], np.cumsum(lengths)])
    flat = np.empty((int(offsets[-1]), 3), dtype=np.float32)
    flat[offsets[:-1]] = start32
    base = offsets[:-1]
    for k, (ids, pts) in enumerate(steps, start=1):
        flat[(base + k) if ids is None else (base[ids] + k)] = pts
    return flat, lengths, np.stack([lo, hi])


def grow_from_roots(f: HybridField, roots: np.ndarray, params: GrowthParams,
                    threads: int = 1) -> HairModel:
    """Grow one strand per root, in root order.

    p0 is the root; p_{k+1} = p_k + step * normalize(F(p_k)); a strand
    stops when |F| <= stop_tau or at max_points. Roots outside the
    occupied volume stay as 1-point strands.
    """
    p = params.resolved(f)
    roots = np.atleast_2d(np.asarray(roots, dtype=np.float64))
    n = len(roots)
    if n == 0:
        return HairModel([])
    threads = max(1, threads)
    if threads == 1 or n < 2 * threads:
        results = [_integrate_batch(f, roots, p.step, p.stop_tau, p.max_points)]
    else:
        edges = np.linspace(0, n, threads + 1).astype(int)
        spans = [(edges[i], edges[i + 1]) for i in range(threads) if edges[i] < edges[i + 1]]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda be: _integrate_batch(f, roots[be[0]:be[1]], p.step,
                                            p.stop_tau, p.max_points), spans))
    strands = []
    for (flat, lengths, _) in results:
        # growth guarantees finite points and step-length spacing, so the
        # per-strand validation pass is skipped
        strands.extend(Strand.unchecked(part)
                       for part in np.split(flat, np.cumsum(lengths)[:-1]))
    bounds = np.stack([np.min([b[2][0] for b in results], axis=0),
                       np.max([b[2][1] for b in results], axis=0)])
    return HairModel(strands, bounds=bounds)


def detect_coverage_gaps(grown: HairModel, masks: list[np.ndarray],
                         cams: list[CameraView], dilation: int = 2) -> list[np.ndarray]:
    """Per-view hair-mask pixels not covered by the grown strands.

    Strands are rasterized as 1-pixel polylines and dilated by `dilation`
    pixels (chebyshev) before subtracting from the hair mask.
    """
    if len(masks) != len(cams):
        raise ValueError("need one mask per camera view")
    gaps = []
    for mask, cam in zip(masks, cams):
        cov = render_strand_view(grown, cam).mask if grown.strands else np.zeros_like(mask)
        if dilation > 0:
            cov = binary_dilation(cov, structure=np.ones((3, 3), bool), iterations=dilation)
        gaps.append(np.asarray(mask, bool) & ~cov)
    return gaps


def _ray_aabb(origin, direction, aabb):
    lo, hi = aabb.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / direction
        t2 = (hi - origin) / direction
    tmin = np.nanmax(np.minimum(t1, t2))
    tmax = np.nanmin(np.maximum(t1, t2))
    return tmin, tmax


def seed_gaps(gaps: list[np.ndarray], cams: list[CameraView], f: HybridField,
              params: GrowthParams, max_seeds: int = 512) -> np.ndarray:
    """March camera rays from gap pixels into the field; the first occupied
    point of each ray becomes a segment seed. Deterministic pixel selection
    by stride and params.seed; at most max_seeds seeds total."""
    p = params.resolved(f)
    seeds = []
    remaining = max_seeds
    n_views = len(gaps)
    for vi, (gap, cam) in enumerate(zip(gaps, cams)):
        if remaining <= 0:
            break
        budget = min(remaining, max(1, max_seeds // n_views)) if vi < n_views - 1 else remaining
        flat = np.flatnonzero(np.asarray(gap, bool).ravel())
        if len(flat) == 0:
            continue
        stride = max(1, len(flat) // budget)
        chosen = flat[params.seed % stride::stride][:budget]
        py, px = np.divmod(chosen, gap.shape[1])
        origin = cam.position
        targets = unproject(cam, px + 0.5, py + 0.5, np.ones(len(px)))
        dirs = targets - origin
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        half_step = p.step / 2.0
        for d in range(len(dirs)):
            tmin, tmax = _ray_aabb(origin, dirs[d], f.aabb)
            if not np.isfinite(tmin) or tmax < tmin:
                continue
            t0 = max(tmin, 0.0)
            n_steps = int((tmax - t0) / half_step) + 1
            ts = t0 + half_step * np.arange(n_steps)
            pts = origin + ts[:, None] * dirs[d]
            v = sample_field(f, pts)
            occ = np.sqrt((v * v).sum(axis=1)) > p.stop_tau
            hit = np.argmax(occ)
            if occ[hit]:
                seeds.append(pts[hit])
                remaining -= 1
                if remaining <= 0:
                    break
    return np.asarray(seeds) if seeds else np.zeros((0, 3))


def grow_segments(f: HybridField, seeds: np.ndarray, params: GrowthParams,
                  seg_max_points: int = 40) -> list[Segment]:
    """Bidirectional growth from interior seeds, oriented along the field.

    Each seed integrates backward against the field and forward along it
    (same stopping rule as scalp growth); the reversed backward half plus
    the forward half form one segment. Seeds outside the occupied volume
    produce nothing.
    """
    if seg_max_points < 2:
        raise ValueError("seg_max_points must be >= 2")
    p = params.resolved(f)
    seeds = np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    if len(seeds) == 0:
        return []
    half_back = seg_max_points // 2
    half_fwd = seg_max_points - half_back - 1
    back_flat, back_len, _ = _integrate_batch(f, seeds, p.step, p.stop_tau,
                                              half_back + 1, sign=-1.0)
    fwd_flat, fwd_len, _ = _integrate_batch(f, seeds, p.step, p.stop_tau,
                                            half_fwd + 1, sign=1.0)
    back_parts = np.split(back_flat, np.cumsum(back_len)[:-1])
    fwd_parts = np.split(fwd_flat, np.cumsum(fwd_len)[:-1])
    segments = []
    for i in range(len(seeds)):
        if back_len[i] == 1 and fwd_len[i] == 1:
            continue  # seed sits outside occupancy
        back = back_parts[i][1:][::-1]
        pts = clean_points(np.concatenate([back, fwd_parts[i]]))
        if len(pts) >= 2:
            segments.append(Segment(pts))
    return segments


def attach_segments(main: HairModel, segments: list[Segment],
                    smooth_window: int = 3) -> HairModel:
    """Attach each segment to its nearest scalp strand.

    The new strand is the closest strand's points from the root up to the
    nearest vertex, followed by the segment, with the junction smoothed.
    Ties resolve to the lowest strand index, then the lowest vertex index.
    Existing strands are never modified; attached strands are appended.
    """
    if not segments:
        return HairModel(list(main.strands))
    if not main.strands:
        raise ValueError("cannot attach segments to an empty model")
    verts = np.concatenate([s.points for s in main.strands]).astype(np.float64)
    strand_id = np.repeat(np.arange(len(main.strands)),
                          [len(s.points) for s in main.strands])
    offsets = np.concatenate([[0], np.cumsum([len(s.points) for s in main.strands])])
    vert_id = np.arange(len(verts)) - offsets[strand_id]

    tree = cKDTree(verts)
    k = min(8, len(verts))
    dists, cand = tree.query(np.stack([s.start for s in segments]).astype(np.float64), k=k)
    dists = np.atleast_2d(dists)
    cand = np.atleast_2d(cand)

    out = list(main.strands)
    for i, seg in enumerate(segments):
        best = dists[i] <= dists[i].min()
        ties = cand[i][best]
        pick = ties[np.lexsort((vert_id[ties], strand_id[ties]))[0]]
        si, vi = int(strand_id[pick]), int(vert_id[pick])
        prefix = main.strands[si].points[:vi + 1]
        pts = clean_points(np.concatenate([prefix, seg.points]))
        strand = smooth_junction(Strand(pts), junction_index=vi, window=smooth_window)
        out.append(strand)
    return HairModel(out)


def smooth_junction(s: Strand, junction_index: int, window: int) -> Strand:
    """Centered moving average around a junction; the averaging radius
    shrinks near the ends so the root and tip never move."""
    if not (0 <= junction_index < len(s.points)):
        raise ValueError("junction index out of range")
    if window <= 0 or len(s.points) < 3:
        return s
    pts = s.points.astype(np.float64)
    out = pts.copy()
    n = len(pts)
    lo = max(1, junction_index - window)
    hi = min(n - 2, junction_index + window)
    for i in range(lo, hi + 1):
        r = min(window, i, n - 1 - i)
        if r > 0:
            out[i] = pts[i - r:i + r + 1].mean(axis=0)
    return Strand(clean_points(out.astype(np.float32)))


def filter_short_strands(model: HairModel, masks: list[np.ndarray],
                         cams: list[CameraView], params: GrowthParams,
                         min_views: int = 2, inside_frac: float = 0.9) -> HairModel:
    """Keep short strands only when enough views support them.

    Strands with >= min_len_points pass unconditionally. A shorter strand
    survives iff in at least min_views views a fraction >= inside_frac of
    its points projects in front of the camera, in frame, and on the hair
    mask.
    """
    if len(masks) != len(cams):
        raise ValueError("need one mask per camera view")
    short_ids = [i for i, s in enumerate(model.strands)
                 if len(s.points) < params.min_len_points]
    if not short_ids:
        return HairModel(list(model.strands))
    pts = np.concatenate([model.strands[i].points for i in short_ids]).astype(np.float64)
    owner = np.repeat(np.arange(len(short_ids)),
                      [len(model.strands[i].points) for i in short_ids])
    counts = np.bincount(owner)
    views_ok = np.zeros(len(short_ids), dtype=np.int64)
    for mask, cam in zip(masks, cams):
        mask = np.asarray(mask, bool)
        h, w = mask.shape
        u, v, z = project(cam, pts)
        ok = z > 0
        px = np.floor(u).astype(np.int64)
        py = np.floor(v).astype(np.int64)
        ok &= (px >= 0) & (px < w) & (py >= 0) & (py < h)
        on_mask = np.zeros(len(pts), dtype=bool)
        on_mask[ok] = mask[py[ok], px[ok]]
        frac = np.bincount(owner, weights=on_mask.astype(np.float64)) / counts
        views_ok += frac >= inside_frac
    keep_short = {short_ids[i] for i in range(len(short_ids))
                  if views_ok[i] >= min_views}
    dropped = len(short_ids) - len(keep_short)
    if dropped:
        log.info("filter_short_strands: dropped %d of %d short strands",
                 dropped, len(short_ids))
    kept = [s for i, s in enumerate(model.strands)
            if len(s.points) >= params.min_len_points or i in keep_short]
    return HairModel(kept)


def observation_plane_normal(cam: CameraView, u: float, v: float,
                             theta: float) -> np.ndarray | None:
    """Unit normal of the plane of 3D directions consistent with seeing
    image orientation theta at pixel (u, v): the plane spanned by the
    viewing ray and the image direction. None when degenerate."""
    origin = cam.position
    ray = unproject(cam, np.array([u]), np.array([v]), np.array([1.0]))[0] - origin
    ray /= np.linalg.norm(ray)
    img_dir = cam.rotation.T @ np.array([np.cos(theta) / cam.fx,
                                         np.sin(theta) / cam.fy, 0.0])
    plane_n = np.cross(ray, img_dir)
    nn = np.linalg.norm(plane_n)
    if nn < 1e-12:
        return None
    return plane_n / nn


def lift_image_orientation(cam: CameraView, u: float, v: float, theta: float,
                           normal: np.ndarray) -> np.ndarray | None:
    """Lift an undirected image orientation at pixel (u, v) into the
    surface tangent plane: intersect the plane spanned by the viewing ray
    and the image direction with the tangent plane. Returns a unit vector
    with arbitrary sign, or None when the construction degenerates."""
    plane_n = observation_plane_normal(cam, u, v, theta)
    if plane_n is None:
        return None
    line = np.cross(plane_n, normal)
    ln = np.linalg.norm(line)
    if ln < 1e-9:
        return None
    return line / ln


def _mean_tangent_direction(planes: list[np.ndarray],
                            normal: np.ndarray) -> np.ndarray | None:
    """Mean 3D orientation from observation-plane normals, projected onto
    the tangent plane. With two or more views the direction is the
    least-squares common line of the planes (smallest eigenvector); a
    single view intersects its plane with the tangent plane directly."""
    if not planes:
        return None
    if len(planes) == 1:
        line = np.cross(planes[0], normal)
    else:
        m = np.zeros((3, 3))
        for q in planes:
            m += np.outer(q, q)
        _, vecs = np.linalg.eigh(m)
        g = vecs[:, 0]
        line = g - normal * (normal @ g)
    ln = np.linalg.norm(line)
    if ln < 1e-9:
        return None
    return line / ln


def recover_buzzcut(collapsed: list[tuple[np.ndarray, np.ndarray]],
                    omaps: list[OrientationMap], cams: list[CameraView],
                    f: HybridField, params: GrowthParams,
                    apex: np.ndarray = SCALP_APEX,
                    buzz_points: int = 12) -> list[Strand]:
    """Regrow collapsed near-root strands from multi-view 2D orientations.

    For each (root, scalp normal): every front-facing view whose mask
    covers the projected root constrains the 3D hair direction to the
    plane spanned by its viewing ray and the observed image orientation.
    The mean 3D orientation over views (the least-squares direction of all
    observation planes; with a single view, that plane's intersection with
    the tangent plane) is projected onto the scalp tangent plane, its
    mod-pi sign resolved toward "away from the scalp apex" (downward prior
    when ambiguous), and the strand regrows for buzz_points steps, blending
    into the field after the first half. Roots visible in no view stay as
    1-point strands.
    """
    if len(omaps) != len(cams):
        raise ValueError("need one orientation map per camera view")
    p = params.resolved(f)
    apex = np.asarray(apex, dtype=np.float64)
    half = buzz_points // 2
    out = []
    no_view = 0
    for root, normal in collapsed:
        root = np.asarray(root, dtype=np.float64)
        normal = np.asarray(normal, dtype=np.float64)
        planes = []
        for omap, cam in zip(omaps, cams):
            u, v, z = project(cam, root)
            if z <= 0:
                continue
            px, py = int(np.floor(u)), int(np.floor(v))
            if not (0 <= px < omap.width and 0 <= py < omap.height):
                continue
            if not omap.mask[py, px]:
                continue
            view_dir = root - cam.position
            view_dir /= np.linalg.norm(view_dir)
            if normal @ view_dir >= 0:
                continue  # back-facing in this view
            q = observation_plane_normal(cam, u, v, float(omap.angle[py, px]))
            if q is not None:
                planes.append(q)
        direction = _mean_tangent_direction(planes, normal)
        if direction is None:
            no_view += 1
            out.append(Strand(root[None, :].astype(np.float32)))
            continue
        ref = root - apex
        s = direction @ ref
        if abs(s) > 1e-9:
            direction = direction * np.sign(s)
        elif direction[1] > 0:
            direction = -direction
        pts = [root]
        cur = root
        for k in range(1, buzz_points):
            d = direction
            if k >= half:
                fv = sample_field(f, cur)
                fm = np.sqrt(fv @ fv)
                if fm > p.stop_tau:
                    alpha = (k - half + 1) / max(buzz_points - half, 1)
                    blended = (1.0 - alpha) * direction + alpha * fv / fm
                    bn = np.linalg.norm(blended)
                    if bn > 1e-12:
                        d = blended / bn
            cur = cur + p.step * d
            pts.append(cur)
        out.append(Strand(clean_points(np.asarray(pts, dtype=np.float32))))
    if no_view:
        log.info("recover_buzzcut: %d roots visible in no view", no_view)
    return out
