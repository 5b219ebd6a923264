"""Procedural ground-truth generator.

Deterministic hairstyles extruded from the canonical scalp, plus complete
testcase directories (strands, cameras, per-view orientation/depth/mask,
baked field, checksummed manifest) that make every pipeline stage testable
without external data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .camera import OrbitSpec, default_intrinsics, make_orbit, save_cameras
from .field import GridSpec, bake_field, save_field
from .orientation import encode_orientation_png, save_mask_png
from .render import render_strand_view, save_depth_pfm
from .scalp import Scalp, canonical_scalp, sample_scalp_roots
from .strands import HairModel, model_from_point_lists, save_strands

STYLES = ("straight", "bob", "wavy", "curly", "buzzcut")
_GRAVITY_BLEND_LEN = 0.06   # meters over which strands bend from normal to fall
_BUZZ_TILT_DEG = 20.0       # buzz strands: scalp normal tilted toward -Y


@dataclass(frozen=True)
class StyleSpec:
    style: str
    strand_count: int = 1000
    length_range: tuple = (0.18, 0.30)
    curl_radius: float = 0.012
    curl_pitch: float = 0.05
    buzz_len: float = 0.005
    seed: int = 0
    point_step: float = 0.002

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.strand_count < 1:
            raise ValueError("strand_count must be >= 1")
        if min(self.length_range) <= 0 or self.buzz_len <= 0 or self.point_step <= 0:
            raise ValueError("lengths must be > 0")

    @classmethod
    def preset(cls, style: str, strand_count: int = 1000, seed: int = 0) -> "StyleSpec":
        ranges = {
            "straight": (0.18, 0.30),
            "bob": (0.10, 0.14),
            "wavy": (0.16, 0.26),
            "curly": (0.12, 0.20),
            "buzzcut": (0.005, 0.005),
        }
        curls = {"wavy": (0.012, 0.08), "curly": (0.013, 0.07)}
        radius, pitch = curls.get(style, (0.012, 0.05))
        return cls(style=style, strand_count=strand_count, seed=seed,
                   length_range=ranges[style], curl_radius=radius, curl_pitch=pitch)


def _hem_heights(spec: StyleSpec, roots: np.ndarray, rng, apex_y: float) -> np.ndarray:
    """Per-strand hem height: strands stop where their guide crosses a
    smooth azimuth-dependent hem surface, the way real cuts align tips.
    Aligned tips also make the style recoverable from a baked field, whose
    occupancy is the union of strand tubes and ends at the hem."""
    lo, hi = spec.length_range
    az = np.arctan2(roots[:, 0], roots[:, 2])
    u = 0.5 + 0.35 * np.sin(2.0 * az + 0.7) + 0.15 * np.cos(3.0 * az - 1.1)
    jitter = rng.uniform(-0.002, 0.002, size=len(roots))
    return apex_y - (lo + (hi - lo) * np.clip(u, 0.0, 1.0)) + jitter


def _outward_dirs(roots: np.ndarray) -> np.ndarray:
    """Horizontal unit directions pushing hair away from the head axis."""
    t = roots.copy()
    t[:, 1] = 0.0
    n = np.linalg.norm(t, axis=1)
    weak = n < 1e-6
    t[weak] = [0.0, 0.0, 1.0]
    n[weak] = 1.0
    return t / n[:, None]


def generate_style(spec: StyleSpec, scalp: Scalp | None = None) -> HairModel:
    """Extrude a deterministic hairstyle from sampled scalp roots."""
    scalp = scalp or canonical_scalp()
    roots, normals = sample_scalp_roots(scalp, spec.strand_count, spec.seed)
    rng = np.random.default_rng(spec.seed + 1)

    if spec.style == "buzzcut":
        return _buzzcut(spec, roots, normals)

    apex_y = float(scalp.vertices[:, 1].max())
    hem_y = _hem_heights(spec, roots, rng, apex_y)
    step = spec.point_step
    if spec.style in ("wavy", "curly"):
        # tight curls multiply the path length per guide step; refine the
        # guide so each curl period keeps at least ~20 points
        step = min(step, spec.curl_pitch / 20.0)
    # guides run until every strand can reach its hem, bends included
    n_steps = int(np.ceil((max(spec.length_range) + 0.15) / step))

    outward = _outward_dirs(roots)
    # fall direction: mostly down with an outward push so the blend from
    # the surface normal never passes through zero
    target = 0.35 * outward + np.array([0.0, -1.0, 0.0])
    target /= np.linalg.norm(target, axis=1)[:, None]

    guide = np.zeros((spec.strand_count, n_steps + 1, 3))
    guide[:, 0] = roots
    pos = roots.copy()
    for k in range(1, n_steps + 1):
        s = (k - 1) * step
        w = min(1.0, s / _GRAVITY_BLEND_LEN)
        d = (1.0 - w) * normals + w * target
        if spec.style == "bob":
            # lower part sweeps gently inward; kept weak enough that the
            # two sides never produce opposing flow under the chin
            tuck = np.clip((hem_y + 0.04 - pos[:, 1]) / 0.04, 0.0, 1.0)
            d = d + (0.5 * tuck)[:, None] * (-outward)
        d /= np.linalg.norm(d, axis=1)[:, None]
        pos = pos + step * d
        guide[:, k] = pos

    # cut each guide where it first sinks below its hem
    below = guide[:, :, 1] <= hem_y[:, None]
    below[:, 0] = False
    n_pts = np.where(below.any(axis=1), below.argmax(axis=1) + 1, n_steps + 1)
    n_pts = np.maximum(n_pts, 2)

    pts = guide
    if spec.style in ("wavy", "curly"):
        # horizontal helix offsets in a global frame with phase a function
        # of height: every strand at a given height shares the same curl
        # direction, so the style survives the round trip through a baked
        # field (which averages directions over each voxel neighborhood)
        phi = 2.0 * np.pi * (apex_y - guide[:, :, 1]) / spec.curl_pitch
        cos0 = np.cos(phi[:, 0])[:, None]
        sin0 = np.sin(phi[:, 0])[:, None]
        off = np.zeros_like(guide)
        off[:, :, 0] = np.cos(phi) - cos0
        off[:, :, 2] = np.sin(phi) - sin0
        pts = guide + spec.curl_radius * off

    return model_from_point_lists(pts[i, :n_pts[i]] for i in range(spec.strand_count))


def _buzzcut(spec: StyleSpec, roots: np.ndarray, normals: np.ndarray) -> HairModel:
    """Short strands along the scalp normal tilted toward -Y."""
    down = np.array([0.0, -1.0, 0.0])
    m = down - (normals @ down)[:, None] * normals
    mn = np.linalg.norm(m, axis=1)
    weak = mn < 1e-6
    if weak.any():
        m[weak] = _outward_dirs(roots[weak])
        mn[weak] = 1.0
    m /= mn[:, None]
    tilt = np.radians(_BUZZ_TILT_DEG)
    d = np.cos(tilt) * normals + np.sin(tilt) * m
    n_pts = max(int(np.ceil(spec.buzz_len / min(spec.point_step, spec.buzz_len / 4))) + 1, 5)
    s = np.linspace(0.0, spec.buzz_len, n_pts)
    pts = roots[:, None, :] + s[None, :, None] * d[:, None, :]
    return model_from_point_lists(pts)


def buzzcut_directions(spec: StyleSpec, scalp: Scalp | None = None):
    """Ground-truth data for buzz-cut recovery tests: the sampled roots,
    their normals, and the exact tilted growth directions."""
    scalp = scalp or canonical_scalp()
    roots, normals = sample_scalp_roots(scalp, spec.strand_count, spec.seed)
    model = _buzzcut(spec, roots, normals)
    dirs = np.stack([s.points[-1] - s.points[0] for s in model.strands]).astype(np.float64)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return roots, normals, dirs


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def make_testcase(spec: StyleSpec, orbit: OrbitSpec, grid: GridSpec,
                  out_dir, image_size: int = 512) -> dict:
    """Write a complete ground-truth dataset directory.

    Layout: strands.hair, cameras.json, views/view_%03d.{orient.png,
    mask.png, depth.pfm}, field.hfld, manifest.json (relative paths plus
    sha256 checksums and a parameter echo). Returns the manifest dict.
    """
    out = Path(out_dir)
    (out / "views").mkdir(parents=True, exist_ok=True)
    scalp = canonical_scalp()
    model = generate_style(spec, scalp)
    save_strands(model, out / "strands.hair")

    cams = make_orbit(orbit, default_intrinsics(image_size, image_size))
    save_cameras(cams, out / "cameras.json")

    files = ["strands.hair", "cameras.json"]
    for vi, cam in enumerate(cams):
        r = render_strand_view(model, cam)
        stem = f"views/view_{vi:03d}"
        encode_orientation_png(r.orientation, out / f"{stem}.orient.png")
        save_mask_png(r.mask, out / f"{stem}.mask.png")
        save_depth_pfm(r.depth, out / f"{stem}.depth.pfm")
        files += [f"{stem}.orient.png", f"{stem}.mask.png", f"{stem}.depth.pfm"]

    hf = bake_field(model, grid)
    save_field(hf, out / "field.hfld")
    files.append("field.hfld")

    manifest = {
        "style": asdict(spec),
        "orbit": asdict(orbit),
        "grid": {"resolution": list(grid.resolution),
                 "aabb": None if grid.aabb is None else np.asarray(grid.aabb).tolist(),
                 "tube_radius": grid.tube_radius},
        "image_size": image_size,
        "files": [{"path": p, "sha256": _sha256(out / p)} for p in files],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest
