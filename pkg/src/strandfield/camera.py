"""Pinhole cameras, orbital rigs, and projection/unprojection.

Camera frame: x right, y down, z forward (determinant +1). Image pixel
centers sit at integer + 0.5 and v grows downward; rasterization and the
projected-direction metrics depend on this convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_VFOV_DEG = 55.0
DEFAULT_ORBIT_RADIUS = 0.6


@dataclass(frozen=True)
class CameraView:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray  # (4, 4) rigid transform

    def __post_init__(self):
        m = np.asarray(self.world_to_camera, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("world_to_camera must be 4x4")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        r = m[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-5:
            raise ValueError("rotation block is not orthonormal within 1e-5")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation block must have determinant +1")
        object.__setattr__(self, "world_to_camera", m)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def view_dir(self) -> np.ndarray:
        """World-space optical axis (+z of the camera frame)."""
        return self.rotation.T @ np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class OrbitSpec:
    n_views: int = 8
    radius: float = DEFAULT_ORBIT_RADIUS
    center: tuple = (0.0, 0.0, 0.0)
    elevation: float = 0.0       # degrees above the horizontal
    start_azimuth: float = 0.0   # degrees, 0 = +Z (front)

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("orbit needs n_views >= 1")
        if self.radius <= 0:
            raise ValueError("orbit radius must be > 0")


def default_intrinsics(width: int = 512, height: int = 512) -> dict:
    """Square pixels, principal point at the image center, 55 deg vertical FOV."""
    f = (height / 2.0) / np.tan(np.radians(DEFAULT_VFOV_DEG) / 2.0)
    return {"width": width, "height": height, "fx": f, "fy": f,
            "cx": width / 2.0, "cy": height / 2.0}


def look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World-to-camera 4x4 for a camera at `position` looking at `target`,
    world +Y up. Raises when the view direction is parallel to +Y."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - position
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 1.0, 0.0])
    x = np.cross(fwd, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("degenerate orbit camera: looking straight along +Y")
    x /= nx
    y = np.cross(fwd, x)  # points world-down: image v grows downward
    m = np.eye(4)
    m[:3, :3] = np.stack([x, y, fwd])
    m[:3, 3] = -m[:3, :3] @ position
    return m


def make_orbit(spec: OrbitSpec, intrinsics: dict | None = None) -> list[CameraView]:
    """Equally spaced azimuth ring at fixed radius/elevation, all looking
    at the orbit center."""
    intr = intrinsics or default_intrinsics()
    center = np.asarray(spec.center, dtype=np.float64)
    el = np.radians(spec.elevation)
    views = []
    for k in range(spec.n_views):
        az = np.radians(spec.start_azimuth + k * 360.0 / spec.n_views)
        pos = center + spec.radius * np.array([
            np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
        views.append(CameraView(world_to_camera=look_at(pos, center), **intr))
    return views


def project(cam: CameraView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pinhole projection of world points (..., 3) -> (u, v, z).

    z is the signed camera-space depth; z <= 0 means behind the camera and
    the returned u, v are then meaningless (never raises).
    """
    p = np.asarray(points, dtype=np.float64)
    pc = p @ cam.rotation.T + cam.translation
    z = pc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * pc[..., 0] / z + cam.cx
        v = cam.fy * pc[..., 1] / z + cam.cy
    return u, v, z


def unproject(cam: CameraView, u, v, z) -> np.ndarray:
    """Inverse of `project` on the z > 0 half space."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("unproject requires depth z > 0")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    pc = np.stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z], axis=-1)
    return (pc - cam.translation) @ cam.rotation


def save_cameras(views: list[CameraView], path) -> None:
    """JSON array of camera records; floats are written exactly (repr)."""
    records = [{
        "width": cam.width, "height": cam.height,
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "world_to_camera": [float(x) for x in cam.world_to_camera.reshape(16)],
    } for cam in views]
    with open(path, "w") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")


def load_cameras(path) -> list[CameraView]:
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError(f"camera file {path}: expected a top-level array")
    views = []
    for i, rec in enumerate(records):
        try:
            m = np.asarray(rec["world_to_camera"], dtype=np.float64).reshape(4, 4)
            views.append(CameraView(
                width=int(rec["width"]), height=int(rec["height"]),
                fx=float(rec["fx"]), fy=float(rec["fy"]),
                cx=float(rec["cx"]), cy=float(rec["cy"]),
                world_to_camera=m,
            ))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"camera file {path}: bad record {i}: {exc}") from exc
    return views
