"""Hair strand data model, binary file I/O, resampling and tangents.

World convention: right-handed, Y-up, meters, head centered at the origin.
Strand points are stored as float32, the same precision as the on-disk
formats, so save/load round-trips are bit-exact.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

log = logging.getLogger(__name__)

HAIR_MAGIC = b"HAIR"


@dataclass(frozen=True)
class Strand:
    """Ordered polyline in world space; the first point is the scalp root."""

    points: np.ndarray  # (n, 3) float32

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 1:
            raise ValueError("strand needs an (n, 3) array with n >= 1")
        if not np.isfinite(pts).all():
            raise ValueError("strand contains non-finite coordinates")
        if len(pts) > 1 and (np.diff(pts, axis=0) == 0).all(axis=1).any():
            raise ValueError("strand contains consecutive duplicate points")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def unchecked(cls, points: np.ndarray) -> "Strand":
        """Wrap an (n, 3) float32 array the caller already guarantees valid
        (used by growth/generation hot paths that build 100k+ strands)."""
        s = cls.__new__(cls)
        object.__setattr__(s, "points", points)
        return s

    @property
    def root(self) -> np.ndarray:
        return self.points[0]

    def arc_length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points.astype(np.float64), axis=0), axis=1).sum())


class HairModel:
    """A collection of strands with a cached exact bounding box.

    Treated as immutable after construction: build a new model instead of
    mutating, so instances are safe to share across threads. Callers that
    already know the exact point bounds (the growth loop tracks them
    inline) may pass them to skip the recomputation.
    """

    def __init__(self, strands: Sequence[Strand], bounds: np.ndarray | None = None):
        self.strands: List[Strand] = list(strands)
        self.bounds = (np.asarray(bounds, dtype=np.float64) if bounds is not None
                       else self._compute_bounds())

    def _compute_bounds(self) -> np.ndarray:
        """(2, 3) array [min, max] over all points; NaN bounds when empty."""
        if not self.strands:
            return np.full((2, 3), np.nan, dtype=np.float64)
        pts = np.concatenate([s.points for s in self.strands])
        return np.stack([pts.min(axis=0).astype(np.float64),
                         pts.max(axis=0).astype(np.float64)])

    def __len__(self) -> int:
        return len(self.strands)

    def total_points(self) -> int:
        return sum(len(s) for s in self.strands)

    def roots(self) -> np.ndarray:
        """(n_strands, 3) float32 array of first points."""
        if not self.strands:
            return np.zeros((0, 3), dtype=np.float32)
        return np.stack([s.points[0] for s in self.strands])


def clean_points(points: np.ndarray) -> np.ndarray:
    """Merge consecutive duplicate points (real datasets contain them)."""
    pts = np.asarray(points, dtype=np.float32)
    if len(pts) < 2:
        return pts
    keep = np.empty(len(pts), dtype=bool)
    keep[0] = True
    keep[1:] = (np.diff(pts, axis=0) != 0).any(axis=1)
    return pts[keep]


# ----------------------------------------------------------------------
# File formats
#
# Native .hair : "HAIR", u32 strand count, per strand u32 point count
#                followed by count * 3 * f32 (little-endian throughout).
# USC .data    : i32 strand count, per strand i32 vertex count followed
#                by count * 3 * f32. No magic; format is never sniffed.
# ----------------------------------------------------------------------

def save_strands(model: HairModel, path) -> None:
    """Write a model in the native .hair format."""
    with open(path, "wb") as fh:
        fh.write(HAIR_MAGIC)
        fh.write(struct.pack("<I", len(model.strands)))
        for s in model.strands:
            fh.write(struct.pack("<I", len(s.points)))
            fh.write(np.ascontiguousarray(s.points, dtype="<f4").tobytes())


def load_strands(path, format: str = "native") -> HairModel:
    """Load strands from a .hair (native) or USC-HairSalon .data file.

    Consecutive duplicate points are merged; strands left with fewer than
    2 points are dropped (their count is logged).
    """
    if format not in ("native", "usc"):
        raise ValueError(f"unknown strand file format {format!r}")
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0
    if format == "native":
        if len(data) < 8:
            raise ValueError(f"truncated .hair file {path}: missing header")
        if data[:4] != HAIR_MAGIC:
            raise ValueError(f"bad magic in {path}: not a .hair file")
        (n_strands,) = struct.unpack_from("<I", data, 4)
        off = 8
    else:
        if len(data) < 4:
            raise ValueError(f"truncated .data file {path}: missing count")
        (n_strands,) = struct.unpack_from("<i", data, 0)
        if n_strands < 0:
            raise ValueError(f"nonsensical strand count {n_strands} in {path}")
        off = 4
    # cheap size sanity bound: every strand needs at least its count field
    if off + 4 * n_strands > len(data):
        raise ValueError(f"truncated strand file {path}: {n_strands} strands declared")

    strands = []
    dropped = 0
    for i in range(n_strands):
        if off + 4 > len(data):
            raise ValueError(f"truncated strand file {path} at strand {i}")
        if format == "native":
            (n_pts,) = struct.unpack_from("<I", data, off)
        else:
            (n_pts,) = struct.unpack_from("<i", data, off)
            if n_pts < 0:
                raise ValueError(f"nonsensical point count {n_pts} in {path}")
        off += 4
        nbytes = n_pts * 12
        if off + nbytes > len(data):
            raise ValueError(f"truncated strand file {path} at strand {i}")
        pts = np.frombuffer(data, dtype="<f4", count=n_pts * 3, offset=off).reshape(-1, 3)
        off += nbytes
        if not np.isfinite(pts).all():
            raise ValueError(f"non-finite coordinates in {path} at strand {i}")
        pts = clean_points(pts)
        if len(pts) < 2:
            dropped += 1
            continue
        strands.append(Strand(pts))
    if dropped:
        log.info("load_strands(%s): dropped %d degenerate strands", path, dropped)
    return HairModel(strands)


# ----------------------------------------------------------------------
# Geometry operations
# ----------------------------------------------------------------------

def resample_strand(strand: Strand, step: float) -> Strand:
    """Resample to uniform arc-length spacing `step` (meters).

    The root and the final point are preserved exactly; interior points sit
    at multiples of `step` along the original polyline.
    """
    if step <= 0:
        raise ValueError("resample step must be > 0")
    pts = strand.points.astype(np.float64)
    if len(pts) < 2:
        return strand
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n_full = int(np.floor(total / step + 1e-9))
    s_vals = np.arange(n_full + 1) * step
    idx = np.clip(np.searchsorted(cum, s_vals, side="right") - 1, 0, len(seg_len) - 1)
    t = (s_vals - cum[idx]) / seg_len[idx]
    out = pts[idx] + seg[idx] * t[:, None]
    out[0] = pts[0]
    if total - s_vals[-1] > step * 1e-6:
        out = np.vstack([out, pts[-1]])
    else:
        out[-1] = pts[-1]
    return Strand(clean_points(out.astype(np.float32)))


def strand_tangents(strand: Strand) -> np.ndarray:
    """Unit forward-difference tangents, (n, 3) float64; the last entry
    copies the previous one."""
    pts = strand.points.astype(np.float64)
    if len(pts) < 2:
        raise ValueError("tangents need a strand with at least 2 points")
    d = np.diff(pts, axis=0)
    d /= np.linalg.norm(d, axis=1)[:, None]
    return np.vstack([d, d[-1]])


def model_from_point_lists(point_lists: Iterable[np.ndarray]) -> HairModel:
    """Build a model, cleaning duplicates and skipping empty inputs."""
    strands = []
    for pts in point_lists:
        pts = clean_points(np.asarray(pts, dtype=np.float32))
        if len(pts) >= 1:
            strands.append(Strand(pts))
    return HairModel(strands)
