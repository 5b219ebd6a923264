"""Command-line interface wiring the library into pipeline stages.

Subcommands: synth, orient, bake, grow, eval, info. Every command prints a
single machine-parsable `<cmd> ok key=value ...` line on success and exits
nonzero with a one-line diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import OrbitSpec, load_cameras
from .field import (GridSpec, bake_field, field_orientation_mse, load_field,
                    occupancy_iou_precision, save_field)
from .growth import (GrowthParams, attach_segments, detect_coverage_gaps,
                     filter_short_strands, grow_from_roots, grow_segments,
                     recover_buzzcut, seed_gaps)
from .metrics import evaluate_views
from .orientation import (GaborBank, decode_orientation_png, encode_orientation_png,
                          gabor_orientation, load_mask_png)
from .render import load_depth_pfm
from .report import summary_line, write_eval_report
from .scalp import canonical_scalp, sample_scalp_roots
from .strands import load_strands, save_strands
from .synth import STYLES, StyleSpec, make_testcase


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads, 0 = auto")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="strandfield",
                                 description="strand-level hair geometry engine")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground-truth testcase directory")
    p.add_argument("--style", choices=STYLES, required=True)
    p.add_argument("--strands", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=8)
    p.add_argument("--image-size", type=int, default=512)
    p.add_argument("--grid-res", type=int, default=128)
    p.add_argument("--tube-radius", type=float, default=None,
                   help="bake influence radius in meters (default 1.5 voxel diagonals)")
    p.add_argument("--orbit-radius", type=float, default=0.6)
    p.add_argument("--elevation", type=float, default=0.0)
    _add_common(p)

    p = sub.add_parser("orient", help="Gabor orientation extraction")
    p.add_argument("--image", help="grayscale or RGB input image")
    p.add_argument("--mask", help="hair mask PNG (255 = hair)")
    p.add_argument("--out", help="output orientation PNG")
    p.add_argument("--confidence-out", default=None)
    p.add_argument("--views-dir", default=None,
                   help="directory with view_*.image.png/view_*.mask.png pairs")
    p.add_argument("--orientations", type=int, default=32)
    p.add_argument("--wavelength", type=float, default=4.0)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--aspect-ratio", type=float, default=0.5)
    p.add_argument("--kernel-radius", type=int, default=8)
    _add_common(p)

    p = sub.add_parser("bake", help="bake a strand file into a hybrid field")
    p.add_argument("--strands", required=True)
    p.add_argument("--format", choices=("native", "usc"), default="native")
    p.add_argument("--out", required=True)
    p.add_argument("--grid-res", type=int, default=128)
    p.add_argument("--tube-radius", type=float, default=None)
    p.add_argument("--aabb", default=None,
                   help="x0,y0,z0,x1,y1,z1 in meters (default: bounds + 10%%)")
    _add_common(p)

    p = sub.add_parser("grow", help="full strand-growing pipeline")
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--roots", default=None, help=".hair file whose roots to grow from")
    p.add_argument("--n-roots", type=int, default=None,
                   help="sample this many roots from the canonical scalp")
    p.add_argument("--testcase", default=None,
                   help="testcase dir providing cameras and per-view maps")
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--max-points", type=int, default=300)
    p.add_argument("--stop-tau", type=float, default=0.1)
    p.add_argument("--min-len-points", type=int, default=10)
    p.add_argument("--seg-max-points", type=int, default=40)
    p.add_argument("--max-seeds", type=int, default=512)
    p.add_argument("--dilation", type=int, default=2)
    p.add_argument("--min-views", type=int, default=2)
    p.add_argument("--inside-frac", type=float, default=0.9)
    p.add_argument("--buzz-points", type=int, default=12)
    p.add_argument("--smooth-window", type=int, default=3)
    p.add_argument("--skip-segments", action="store_true")
    p.add_argument("--skip-filter", action="store_true")
    p.add_argument("--skip-buzzcut", action="store_true")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate strands against testcase views")
    p.add_argument("--strands", required=True)
    p.add_argument("--testcase", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-pairs", type=int, default=10000)
    p.add_argument("--pred-field", default=None)
    p.add_argument("--gt-field", default=None)
    _add_common(p)

    p = sub.add_parser("info", help="print a summary of an artifact file")
    p.add_argument("path")
    _add_common(p)
    return ap


def load_testcase_views(tc_dir):
    """Cameras plus per-view orientation maps, depth maps and masks."""
    tc = Path(tc_dir)
    cams = load_cameras(tc / "cameras.json")
    omaps, depths, masks = [], [], []
    for vi in range(len(cams)):
        stem = tc / "views" / f"view_{vi:03d}"
        omaps.append(decode_orientation_png(f"{stem}.orient.png"))
        depths.append(load_depth_pfm(f"{stem}.depth.pfm"))
        masks.append(load_mask_png(f"{stem}.mask.png"))
    return cams, omaps, depths, masks


def cmd_synth(args) -> int:
    spec = StyleSpec.preset(args.style, strand_count=args.strands, seed=args.seed)
    orbit = OrbitSpec(n_views=args.views, radius=args.orbit_radius,
                      elevation=args.elevation)
    grid = GridSpec(resolution=(args.grid_res,) * 3, tube_radius=args.tube_radius)
    manifest = make_testcase(spec, orbit, grid, args.out, image_size=args.image_size)
    print(f"synth ok style={args.style} strands={args.strands} "
          f"views={args.views} files={len(manifest['files'])} out={args.out}")
    return 0


def cmd_orient(args) -> int:
    bank = GaborBank(n_orientations=args.orientations, wavelength=args.wavelength,
                     sigma=args.sigma, aspect_ratio=args.aspect_ratio,
                     kernel_radius=args.kernel_radius)
    from PIL import Image

    def run_one(image_path, mask_path, out_path, conf_path=None):
        img = np.asarray(Image.open(image_path).convert("L"), dtype=np.float64) / 255.0
        mask = load_mask_png(mask_path)
        omap = gabor_orientation(img, mask, bank)
        encode_orientation_png(omap, out_path, confidence_path=conf_path)

    if args.views_dir:
        views = sorted(Path(args.views_dir).glob("view_*.image.png"))
        if not views:
            raise ValueError(f"no view_*.image.png files under {args.views_dir}")
        for img_path in views:
            stem = img_path.name[:-len(".image.png")]
            run_one(img_path, img_path.with_name(f"{stem}.mask.png"),
                    img_path.with_name(f"{stem}.orient.png"))
        print(f"orient ok views={len(views)} bank_n={bank.n_orientations} "
              f"dir={args.views_dir}")
    else:
        if not (args.image and args.mask and args.out):
            raise ValueError("orient needs --image, --mask and --out (or --views-dir)")
        run_one(args.image, args.mask, args.out, args.confidence_out)
        print(f"orient ok bank_n={bank.n_orientations} out={args.out}")
    return 0


def cmd_bake(args) -> int:
    model = load_strands(args.strands, format=args.format)
    aabb = None
    if args.aabb:
        vals = [float(x) for x in args.aabb.split(",")]
        if len(vals) != 6:
            raise ValueError("--aabb needs 6 comma-separated numbers")
        aabb = np.array(vals).reshape(2, 3)
    grid = GridSpec(resolution=(args.grid_res,) * 3, aabb=aabb,
                    tube_radius=args.tube_radius)
    hf = bake_field(model, grid)
    save_field(hf, args.out)
    occ = float((hf.magnitudes() > 0.1).mean())
    print(f"bake ok strands={len(model)} res={args.grid_res} "
          f"occupied_frac={occ:.4f} out={args.out}")
    return 0


def cmd_grow(args) -> int:
    hf = load_field(args.field)
    params = GrowthParams(step=args.step, max_points=args.max_points,
                          stop_tau=args.stop_tau,
                          min_len_points=args.min_len_points, seed=args.seed)
    if args.roots:
        roots = load_strands(args.roots).roots().astype(np.float64)
        root_normals = None
    elif args.n_roots:
        scalp = canonical_scalp()
        roots, root_normals = sample_scalp_roots(scalp, args.n_roots, args.seed)
    else:
        raise ValueError("grow needs --roots or --n-roots")

    needs_views = not (args.skip_segments and args.skip_filter and args.skip_buzzcut)
    cams = omaps = masks = None
    if needs_views:
        if not args.testcase:
            raise ValueError("grow needs --testcase unless all view stages are skipped")
        cams, omaps, _, masks = load_testcase_views(args.testcase)

    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    model = grow_from_roots(hf, roots, params, threads=threads)
    n_main = len(model)

    n_segments = 0
    if not args.skip_segments:
        gaps = detect_coverage_gaps(model, masks, cams, dilation=args.dilation)
        seeds = seed_gaps(gaps, cams, hf, params, max_seeds=args.max_seeds)
        segments = grow_segments(hf, seeds, params, seg_max_points=args.seg_max_points)
        model = attach_segments(model, segments, smooth_window=args.smooth_window)
        n_segments = len(segments)

    n_dropped = 0
    if not args.skip_filter:
        before = len(model)
        model = filter_short_strands(model, masks, cams, params,
                                     min_views=args.min_views,
                                     inside_frac=args.inside_frac)
        n_dropped = before - len(model)

    n_buzz = 0
    if not args.skip_buzzcut:
        scalp = canonical_scalp()
        short_idx = [i for i, s in enumerate(model.strands)
                     if len(s.points) < params.min_len_points]
        if short_idx:
            short_roots = np.stack([model.strands[i].points[0] for i in short_idx])
            normals = (root_normals[short_idx] if args.n_roots and not args.roots
                       and len(model) == len(roots)
                       else scalp.nearest_normals(short_roots))
            collapsed = list(zip(short_roots.astype(np.float64), normals))
            regrown = recover_buzzcut(collapsed, omaps, cams, hf, params,
                                      buzz_points=args.buzz_points)
            from .strands import HairModel
            kept = [s for i, s in enumerate(model.strands) if i not in set(short_idx)]
            model = HairModel(kept + regrown)
            n_buzz = len(regrown)

    save_strands(model, args.out)
    print(f"grow ok strands={len(model)} main={n_main} segments={n_segments} "
          f"dropped_short={n_dropped} buzz_regrown={n_buzz} "
          f"points={model.total_points()} out={args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_strands(args.strands)
    cams, omaps, depths, masks = load_testcase_views(args.testcase)
    report = evaluate_views(model, cams, omaps, depths, masks,
                            n_pairs=args.n_pairs, seed=args.seed)
    extra = {}
    if args.pred_field and args.gt_field:
        pf = load_field(args.pred_field)
        gf = load_field(args.gt_field)
        stats = field_orientation_mse(pf, gf, seed=args.seed)
        iou, prec = occupancy_iou_precision(pf, gf, seed=args.seed)
        extra = {"field_l1": stats.l1_mean, "field_mse": stats.mse,
                 "field_iou": iou, "field_precision": prec}
    write_eval_report(report, args.out_dir, extra=extra)
    print(summary_line(report))
    return 0


def cmd_info(args) -> int:
    path = Path(args.path)
    suffix = "".join(path.suffixes[-2:]) if path.suffixes else ""
    if path.suffix == ".hair" or path.suffix == ".data":
        model = load_strands(path, format="usc" if path.suffix == ".data" else "native")
        lo, hi = model.bounds
        print(f"info ok kind=strands strands={len(model)} "
              f"points={model.total_points()} "
              f"bounds_min={lo.tolist()} bounds_max={hi.tolist()}")
    elif path.suffix == ".hfld":
        hf = load_field(path)
        occ = float((hf.magnitudes() > 0.1).mean())
        print(f"info ok kind=field res={'x'.join(map(str, hf.resolution))} "
              f"aabb_min={hf.aabb[0].tolist()} aabb_max={hf.aabb[1].tolist()} "
              f"occupied_frac={occ:.4f}")
    elif path.suffix == ".json":
        cams = load_cameras(path)
        print(f"info ok kind=cameras views={len(cams)}")
    elif path.suffix == ".pfm":
        d = load_depth_pfm(path)
        nz = d[d > 0]
        rng = f"{nz.min():.4f}..{nz.max():.4f}" if len(nz) else "empty"
        print(f"info ok kind=depth size={d.shape[1]}x{d.shape[0]} depth_range={rng}")
    elif suffix.endswith(".png"):
        if "orient" in path.name:
            omap = decode_orientation_png(path)
            print(f"info ok kind=orientation size={omap.width}x{omap.height} "
                  f"mask_pixels={int(omap.mask.sum())}")
        else:
            mask = load_mask_png(path)
            print(f"info ok kind=mask size={mask.shape[1]}x{mask.shape[0]} "
                  f"mask_pixels={int(mask.sum())}")
    else:
        raise ValueError(f"unrecognized artifact type: {path}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "orient": cmd_orient,
    "bake": cmd_bake,
    "grow": cmd_grow,
    "eval": cmd_eval,
    "info": cmd_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"{args.command} error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
