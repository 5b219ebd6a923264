"""Strand-level 3D hair geometry engine.

Core pieces: strand/scalp data model and file formats, calibrated orbital
cameras, Gabor orientation maps, the hybrid growth field (direction +
occupancy in one voxel grid), deterministic parallel strand growing, a
software strand renderer, evaluation metrics, and a synthetic ground-truth
oracle.
"""

__version__ = "0.1.0"

from .camera import (CameraView, OrbitSpec, default_intrinsics, load_cameras,
                     look_at, make_orbit, project, save_cameras, unproject)
from .field import (GridSpec, HybridField, bake_field, field_orientation_mse,
                    load_field, occupancy, occupancy_iou_precision,
                    sample_field, save_field)
from .growth import (GrowthParams, Segment, attach_segments,
                     detect_coverage_gaps, filter_short_strands,
                     grow_from_roots, grow_segments, recover_buzzcut,
                     seed_gaps, smooth_junction)
from .metrics import (EvalReport, ViewEval, evaluate_views, hairrida,
                      hairsale, mask_iou)
from .orientation import (EmptyIntersectionError, GaborBank, OrientationMap,
                          decode_orientation_png, encode_orientation_png,
                          gabor_orientation, load_mask_png, mean_angular_error,
                          save_mask_png)
from .render import (RenderedView, load_depth_pfm, render_strand_view,
                     save_depth_pfm)
from .scalp import SCALP_APEX, Scalp, canonical_scalp, sample_scalp_roots
from .strands import (HairModel, Strand, clean_points, load_strands,
                      model_from_point_lists, resample_strand, save_strands,
                      strand_tangents)
from .synth import StyleSpec, buzzcut_directions, generate_style, make_testcase
