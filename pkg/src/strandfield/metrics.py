"""Reconstruction quality metrics: projected angular error (HairSale),
relative depth ordering accuracy (HairRida), and projected mask IoU."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraView
from .orientation import EmptyIntersectionError, OrientationMap, mean_angular_error
from .render import RenderedView, render_strand_view
from .strands import HairModel

DEPTH_DELTA_FLOOR = 1e-3   # meters; pairs closer than this in gt depth are skipped
DEFAULT_N_PAIRS = 10_000


def hairsale(model: HairModel, cam: CameraView, gt_orient: OrientationMap,
             rendered: RenderedView | None = None) -> float:
    """Mean angular error (degrees) between the model's projected strand
    directions and a ground-truth orientation map, over the mask overlap."""
    r = rendered or render_strand_view(model, cam)
    return mean_angular_error(r.orientation, gt_orient)


def hairrida(model: HairModel, cam: CameraView, gt_depth: np.ndarray,
             gt_mask: np.ndarray, n_pairs: int = DEFAULT_N_PAIRS, seed: int = 0,
             rendered: RenderedView | None = None) -> float:
    """Percentage of random pixel pairs whose rendered depth ordering
    matches ground truth.

    Pairs are drawn (deterministically by seed) from the overlap of the
    rendered and gt masks and must differ by more than 1 mm in gt depth;
    sampling is capped at 1000x oversampling. Raises when no valid pair
    exists.
    """
    if n_pairs < 1:
        raise ValueError("need n_pairs >= 1")
    r = rendered or render_strand_view(model, cam)
    gt_mask = np.asarray(gt_mask, bool)
    if gt_mask.shape != r.mask.shape:
        raise ValueError("mask size mismatch")
    inter = r.mask & gt_mask & (np.asarray(gt_depth) > 0)
    pix = np.flatnonzero(inter.ravel())
    if len(pix) < 2:
        raise EmptyIntersectionError("not enough overlapping depth pixels")
    gt = np.asarray(gt_depth, dtype=np.float64).ravel()[pix]
    pr = r.depth.astype(np.float64).ravel()[pix]
    rng = np.random.default_rng(seed)
    got_match = 0
    got_valid = 0
    drawn = 0
    while got_valid < n_pairs and drawn < 1000 * n_pairs:
        m = n_pairs
        i = rng.integers(0, len(pix), m)
        j = rng.integers(0, len(pix), m)
        drawn += m
        valid = np.abs(gt[i] - gt[j]) > DEPTH_DELTA_FLOOR
        i, j = i[valid], j[valid]
        if len(i) > n_pairs - got_valid:
            i = i[:n_pairs - got_valid]
            j = j[:n_pairs - got_valid]
        got_valid += len(i)
        got_match += int((np.sign(pr[i] - pr[j]) == np.sign(gt[i] - gt[j])).sum())
    if got_valid == 0:
        raise EmptyIntersectionError("no pixel pairs exceed the depth-difference floor")
    return 100.0 * got_match / got_valid


def mask_iou(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Intersection over union of two masks; two empty masks give 1.0."""
    a = np.asarray(pred_mask, bool)
    b = np.asarray(gt_mask, bool)
    if a.shape != b.shape:
        raise ValueError("mask size mismatch")
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


@dataclass
class ViewEval:
    view: int
    hairsale_deg: float        # NaN when the masks do not overlap
    hairrida_pct: float        # NaN when no valid depth pair exists
    iou: float
    n_orient_pixels: int
    n_depth_pairs: int


@dataclass
class EvalReport:
    per_view: list[ViewEval] = field(default_factory=list)
    hairsale_deg: float = float("nan")
    hairrida_pct: float = float("nan")
    iou: float = float("nan")
    n_pairs_requested: int = DEFAULT_N_PAIRS
    seed: int = 0

    def finalize(self) -> "EvalReport":
        """Aggregate view rows; views with no overlap are excluded from
        the means (they keep NaN in their row)."""
        def nanmean(vals):
            vals = [v for v in vals if not np.isnan(v)]
            return float(np.mean(vals)) if vals else float("nan")
        self.hairsale_deg = nanmean([v.hairsale_deg for v in self.per_view])
        self.hairrida_pct = nanmean([v.hairrida_pct for v in self.per_view])
        self.iou = nanmean([v.iou for v in self.per_view])
        return self


def evaluate_views(model: HairModel, cams: list[CameraView],
                   gt_orients: list[OrientationMap],
                   gt_depths: list[np.ndarray], gt_masks: list[np.ndarray],
                   n_pairs: int = DEFAULT_N_PAIRS, seed: int = 0) -> EvalReport:
    """Run all projection metrics for a model against per-view ground truth."""
    if not (len(cams) == len(gt_orients) == len(gt_depths) == len(gt_masks)):
        raise ValueError("per-view inputs must have equal lengths")
    report = EvalReport(n_pairs_requested=n_pairs, seed=seed)
    for vi, cam in enumerate(cams):
        r = render_strand_view(model, cam)
        gt_o = gt_orients[vi]
        both = r.mask & gt_o.mask
        try:
            sale = hairsale(model, cam, gt_o, rendered=r)
        except EmptyIntersectionError:
            sale = float("nan")
        try:
            rida = hairrida(model, cam, gt_depths[vi], gt_masks[vi],
                            n_pairs=n_pairs, seed=seed + vi, rendered=r)
            pairs = n_pairs
        except EmptyIntersectionError:
            rida, pairs = float("nan"), 0
        report.per_view.append(ViewEval(
            view=vi, hairsale_deg=sale, hairrida_pct=rida,
            iou=mask_iou(r.mask, gt_masks[vi]),
            n_orient_pixels=int(both.sum()), n_depth_pairs=pairs))
    return report.finalize()
