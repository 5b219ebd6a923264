"""Undirected 2D orientation maps.

Angles are line directions in [0, pi) measured from the image +x axis with
y growing downward; theta and theta+pi describe the same pixel. Extraction
uses a bank of zero-mean Gabor filters; the PNG interchange format doubles
the angle so the encoding is continuous across the 0/pi wraparound.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image
from scipy.signal import fftconvolve


class EmptyIntersectionError(ValueError):
    """Raised when two orientation maps share no masked pixels."""


@dataclass(frozen=True)
class OrientationMap:
    angle: np.ndarray       # (h, w) float64, radians in [0, pi)
    mask: np.ndarray        # (h, w) bool
    confidence: np.ndarray | None = None  # (h, w) float32 in [0, 1]

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        angle = np.asarray(self.angle, dtype=np.float64)
        if angle.shape != mask.shape or angle.ndim != 2:
            raise ValueError("angle and mask must be 2D arrays of the same shape")
        if not np.isfinite(angle[mask]).all():
            raise ValueError("orientation angles must be finite inside the mask")
        angle = np.where(mask, np.mod(angle, np.pi), 0.0)
        conf = self.confidence
        if conf is None:
            conf = mask.astype(np.float32)
        else:
            conf = np.clip(np.asarray(conf, dtype=np.float32), 0.0, 1.0)
            if conf.shape != mask.shape:
                raise ValueError("confidence shape mismatch")
            conf = np.where(mask, conf, 0.0).astype(np.float32)
        object.__setattr__(self, "angle", angle)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "confidence", conf)

    @property
    def height(self) -> int:
        return self.angle.shape[0]

    @property
    def width(self) -> int:
        return self.angle.shape[1]


@dataclass(frozen=True)
class GaborBank:
    """Filter bank at angles k*pi/n, k = 0..n-1.

    Defaults suit renders around 512..1024 px; all values are in pixels
    except the unitless aspect ratio.
    """

    n_orientations: int = 32
    wavelength: float = 4.0
    sigma: float = 2.0
    aspect_ratio: float = 0.5
    kernel_radius: int = 8

    def __post_init__(self):
        if self.n_orientations < 4:
            raise ValueError("need at least 4 filter orientations")
        if self.wavelength <= 0 or self.sigma <= 0:
            raise ValueError("wavelength and sigma must be > 0")

    @property
    def angles(self) -> np.ndarray:
        n = self.n_orientations
        return np.arange(n) * np.pi / n


@lru_cache(maxsize=8)
def _bank_kernels(bank: GaborBank) -> np.ndarray:
    """(n, k, k) float64 kernels, each exactly mean-subtracted so responses
    are invariant to intensity offsets."""
    r = bank.kernel_radius
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    kernels = []
    for theta in bank.angles:
        # u runs along the line direction, v across it; the envelope is
        # elongated along the line and the carrier oscillates across it
        u = x * np.cos(theta) + y * np.sin(theta)
        v = -x * np.sin(theta) + y * np.cos(theta)
        g = np.exp(-(bank.aspect_ratio ** 2 * u * u + v * v) / (2.0 * bank.sigma ** 2))
        k = g * np.cos(2.0 * np.pi * v / bank.wavelength)
        k -= k.mean()
        kernels.append(k)
    return np.stack(kernels)


def gabor_orientation(image: np.ndarray, mask: np.ndarray,
                      bank: GaborBank | None = None) -> OrientationMap:
    """Per-pixel line direction from the strongest absolute filter response.

    Ties pick the lowest filter index. Confidence is
    (max - mean) / (max + eps) over the absolute responses, clamped to
    [0, 1]. Borders are reflect-padded.
    """
    bank = bank or GaborBank()
    img = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if img.ndim != 2:
        raise ValueError("expected a grayscale image")
    if img.shape != mask.shape:
        raise ValueError("image and mask sizes differ")
    r = bank.kernel_radius
    padded = np.pad(img, r, mode="reflect")
    responses = np.empty((bank.n_orientations,) + img.shape)
    for i, k in enumerate(_bank_kernels(bank)):
        # kernels are symmetric under 180 degree rotation, so convolution
        # and correlation coincide
        full = fftconvolve(padded, k, mode="same")
        responses[i] = np.abs(full[r:-r, r:-r])
    rmax = responses.max(axis=0)
    # responses within a relative epsilon of the max count as tied and the
    # lowest filter index wins; exact ties (symmetric inputs) would
    # otherwise break differently after an affine intensity change
    best = (responses >= rmax * (1.0 - 1e-9)).argmax(axis=0)
    rmean = responses.mean(axis=0)
    conf = np.clip((rmax - rmean) / (rmax + 1e-12), 0.0, 1.0)
    angle = bank.angles[best]
    return OrientationMap(angle=np.where(mask, angle, 0.0), mask=mask,
                          confidence=np.where(mask, conf, 0.0))


def angular_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Undirected per-element angle distance in radians, in [0, pi/2]."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    d = np.mod(d, np.pi)
    return np.minimum(d, np.pi - d)


def mean_angular_error(pred: OrientationMap, gt: OrientationMap) -> float:
    """Mean undirected angle error in degrees over both masks' intersection.

    Raises EmptyIntersectionError when the masks do not overlap.
    """
    if pred.angle.shape != gt.angle.shape:
        raise ValueError("orientation maps have different sizes")
    both = pred.mask & gt.mask
    if not both.any():
        raise EmptyIntersectionError("orientation masks do not overlap")
    err = angular_difference(pred.angle[both], gt.angle[both])
    return float(np.degrees(err.mean()))


# ----------------------------------------------------------------------
# PNG interchange formats
#
# Orientation: 8-bit RGB; R = round((cos 2t + 1)/2 * 255),
# G = round((sin 2t + 1)/2 * 255), B = 255 inside the mask else 0,
# R = G = 0 outside. Mask: 8-bit grayscale, 255 = hair.
# ----------------------------------------------------------------------

def encode_orientation_png(omap: OrientationMap, path,
                           confidence_path=None) -> None:
    t2 = 2.0 * omap.angle.astype(np.float64)
    r = np.rint((np.cos(t2) + 1.0) / 2.0 * 255.0).astype(np.uint8)
    g = np.rint((np.sin(t2) + 1.0) / 2.0 * 255.0).astype(np.uint8)
    b = np.where(omap.mask, 255, 0).astype(np.uint8)
    r[~omap.mask] = 0
    g[~omap.mask] = 0
    Image.fromarray(np.stack([r, g, b], axis=2), mode="RGB").save(path)
    if confidence_path is not None:
        conf = np.rint(omap.confidence * 255.0).astype(np.uint8)
        Image.fromarray(conf, mode="L").save(confidence_path)


def decode_orientation_png(path) -> OrientationMap:
    img = Image.open(path)
    if img.mode != "RGB":
        raise ValueError(f"{path}: orientation PNG must be 8-bit RGB")
    arr = np.asarray(img)
    mask = arr[:, :, 2] >= 128
    r = arr[:, :, 0].astype(np.float64) / 255.0 * 2.0 - 1.0
    g = arr[:, :, 1].astype(np.float64) / 255.0 * 2.0 - 1.0
    angle = np.mod(np.arctan2(g, r) / 2.0, np.pi)
    return OrientationMap(angle=np.where(mask, angle, 0.0), mask=mask)


def save_mask_png(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8),
                    mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img) >= 128
