"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines; the full oracle round-trips take a few minutes.
"""

import time

import numpy as np
import pytest

import strandfield as sf
from strandfield.cli import load_testcase_views, main
from strandfield.growth import GrowthParams, _integrate_batch
from strandfield.orientation import GaborBank, angular_difference

STYLES = ("straight", "bob", "wavy", "curly")
GRID_RES = 128
N_VIEWS = 8
N_ROOTS = 10_000
IMAGE_SIZE = 384
ORBIT_RADIUS = 0.65
MAX_POINTS = 1200


def report(ok, label, detail):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'} {label}: {detail}")


def oracle_tube_radius(model):
    """Bake influence radius for the acceptance grids: a little above the
    half voxel diagonal so strands never fall between voxel centers."""
    span = (model.bounds[1] - model.bounds[0]) * (1.0 + 2 * 0.10)
    diag = float(np.linalg.norm(span / GRID_RES))
    return max(0.0025, 0.55 * diag)


@pytest.fixture(scope="session")
def oracle_cases(tmp_path_factory):
    """Full-scale testcase + CLI grow + CLI eval for each style."""
    base = tmp_path_factory.mktemp("acceptance")
    cases = {}
    for style in STYLES:
        t0 = time.perf_counter()
        spec = sf.StyleSpec.preset(style, strand_count=N_ROOTS, seed=0)
        tube = oracle_tube_radius(sf.generate_style(spec))
        tc = base / style
        rc = main(["synth", "--style", style, "--strands", str(N_ROOTS),
                   "--out", str(tc), "--views", str(N_VIEWS),
                   "--image-size", str(IMAGE_SIZE), "--grid-res", str(GRID_RES),
                   "--tube-radius", f"{tube:.6f}",
                   "--orbit-radius", str(ORBIT_RADIUS), "--seed", "0"])
        assert rc == 0
        field = sf.load_field(tc / "field.hfld")
        step = 0.25 * float(field.voxel_size.min())
        grown = tc / "grown.hair"
        rc = main(["grow", "--field", str(tc / "field.hfld"),
                   "--roots", str(tc / "strands.hair"), "--out", str(grown),
                   "--step", f"{step:.8f}", "--max-points", str(MAX_POINTS),
                   "--skip-segments", "--skip-filter", "--skip-buzzcut"])
        assert rc == 0
        rep_dir = tc / "report"
        rc = main(["eval", "--strands", str(grown), "--testcase", str(tc),
                   "--out-dir", str(rep_dir), "--seed", "1"])
        assert rc == 0
        kv = dict(line.split("=", 1)
                  for line in (rep_dir / "report.txt").read_text().strip().splitlines())
        cases[style] = {
            "dir": tc,
            "grown": grown,
            "step": step,
            "hairsale": float(kv["hairsale_deg"]),
            "hairrida": float(kv["hairrida_pct"]),
            "iou": float(kv["iou"]),
            "runtime": time.perf_counter() - t0,
        }
    return cases


def test_criterion_1_oracle_round_trip(oracle_cases):
    ok = True
    details = []
    for style, c in oracle_cases.items():
        style_ok = (c["hairsale"] <= 5.0 and c["iou"] >= 0.90
                    and c["hairrida"] >= 95.0 and c["runtime"] < 60.0)
        ok &= style_ok
        details.append(f"{style}: sale={c['hairsale']:.2f}deg "
                       f"rida={c['hairrida']:.2f}% iou={c['iou']:.4f} "
                       f"t={c['runtime']:.0f}s")
    report(ok, "[1] end-to-end oracle round-trip (<=5deg, >=0.90 IoU, >=95%, <60s)",
           "; ".join(details))
    for style, c in oracle_cases.items():
        assert c["hairsale"] <= 5.0, style
        assert c["iou"] >= 0.90, style
        assert c["hairrida"] >= 95.0, style
        assert c["runtime"] < 60.0, style


def test_criterion_2_paper_number_status(oracle_cases):
    # Table 1/2 and the 4.2 network metrics need trained networks and the
    # authors' annotated data; the formulas are exercised instead, and the
    # self-consistency identities must hold exactly.
    tc = oracle_cases["straight"]["dir"]
    field = sf.load_field(tc / "field.hfld")
    stats = sf.field_orientation_mse(field, field, n_samples=5000, seed=0)
    iou, prec = sf.occupancy_iou_precision(field, field, n_samples=50_000, seed=0)
    spec = sf.StyleSpec.preset("bob", strand_count=500, seed=3)
    model = sf.generate_style(spec)
    cam = sf.make_orbit(sf.OrbitSpec(n_views=1, radius=ORBIT_RADIUS),
                        sf.default_intrinsics(256, 256))[0]
    sale = sf.hairsale(model, cam, sf.render_strand_view(model, cam).orientation)
    ok = (stats.l1_mean == 0.0 and stats.mse == 0.0 and (iou, prec) == (1.0, 1.0)
          and sale == 0.0)
    report(ok, "[2] paper-number substitutes",
           f"self identities exact: field L1={stats.l1_mean} MSE={stats.mse} "
           f"IoU/prec={iou}/{prec} hairsale-self={sale}deg; paper values "
           "(12.83deg/80.52%/0.847, 16.05deg, 0.018/0.986/0.997) not reproducible "
           "without trained networks and annotated data")
    assert ok


def test_criterion_3_field_regime_and_tube_iou(oracle_cases):
    worst = 0.0
    for style, c in oracle_cases.items():
        field = sf.load_field(c["dir"] / "field.hfld")
        mags = field.magnitudes()
        occ = mags[mags > 0]
        worst = max(worst, float(np.abs(occ - 1.0).max()))
    regime_ok = worst <= 1e-4

    pts = np.stack([np.zeros(50), np.linspace(-0.1, 0.1, 50), np.zeros(50)],
                   axis=1).astype(np.float32)
    model = sf.HairModel([sf.Strand(pts)])
    aabb = np.array([[-0.15, -0.15, -0.15], [0.15, 0.15, 0.15]])
    field = sf.bake_field(model, sf.GridSpec(resolution=(128, 128, 128), aabb=aabb))
    lo, _ = field.aabb.astype(np.float64)
    vox = field.voxel_size
    r = 1.5 * np.linalg.norm(vox)
    axes = [lo[i] + (np.arange(128) + 0.5) * vox[i] for i in range(3)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    a, b = np.array([0, -0.1, 0.0]), np.array([0, 0.1, 0.0])
    ab = b - a
    t = np.clip(((centers - a) @ ab) / (ab @ ab), 0, 1)
    d = np.linalg.norm(centers - a - t[..., None] * ab, axis=-1)
    analytic = d <= r
    baked = field.magnitudes() > 0.1
    iou = (analytic & baked).sum() / (analytic | baked).sum()
    ok = regime_ok and iou > 0.95
    report(ok, "[3] hybrid-field regime invariant",
           f"max |mag-1| over occupied voxels (4 styles) = {worst:.2e} (<=1e-4); "
           f"single-tube occupancy IoU vs analytic capsule at 128^3 = {iou:.4f} (>0.95)")
    assert regime_ok and iou > 0.95


def test_criterion_4_growth_determinism_convergence(oracle_cases):
    c = oracle_cases["straight"]
    field = sf.load_field(c["dir"] / "field.hfld")
    roots = sf.load_strands(c["dir"] / "strands.hair").roots().astype(np.float64)
    p = GrowthParams(step=c["step"], max_points=MAX_POINTS)
    models = {t: sf.grow_from_roots(field, roots, p, threads=t) for t in (1, 2, 8)}
    identical = all(
        np.array_equal(a.points, b.points)
        for t in (2, 8)
        for a, b in zip(models[1].strands, models[t].strands))

    lengths = np.array([len(s) for s in models[1].strands])
    ends = np.stack([s.points[-1] for s in models[1].strands]).astype(np.float64)
    end_mags = np.linalg.norm(sf.sample_field(field, ends), axis=1)
    disjunction = ((end_mags <= p.stop_tau) | (lengths == p.max_points)).mean()

    regrow = sf.grow_from_roots(field, ends, p)
    added = sum(len(s) - 1 for s in regrow.strands)

    ok = identical and disjunction == 1.0 and added == 0
    report(ok, "[4] growth determinism and convergence",
           f"threads {{1,2,8}} bit-identical={identical}; termination disjunction "
           f"{100 * disjunction:.1f}%; regrow-from-endpoints added {added} points")
    assert identical
    assert disjunction == 1.0
    assert added == 0


def test_criterion_5_gabor_accuracy():
    bank = GaborBank()
    size = 96
    mask = np.ones((size, size), bool)
    r = 2 * bank.kernel_radius

    def grating(theta):
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        across = -xx * np.sin(theta) + yy * np.cos(theta)
        return 0.5 + 0.5 * np.cos(2.0 * np.pi * across / bank.wavelength)

    errs = []
    for k in range(64):
        theta = k * np.pi / 64
        om = sf.gabor_orientation(grating(theta), mask, bank)
        err = angular_difference(om.angle[r:-r, r:-r], theta)
        errs.append(np.degrees(err.mean()))
    mean_err = float(np.mean(errs))

    img = grating(np.radians(37.3))
    base = sf.gabor_orientation(img, mask, bank)
    affine_ok = all(
        np.array_equal(base.angle, sf.gabor_orientation(a * img + b, mask, bank).angle)
        for a, b in [(0.25, 7.0), (12.0, -1.5)])

    ok = mean_err < 180.0 / 64 and affine_ok
    report(ok, "[5] Gabor accuracy",
           f"mean angular error over 64 gratings = {mean_err:.3f}deg "
           f"(< {180 / 64:.4f}); affine argmax bit-exact = {affine_ok}")
    assert mean_err < 180.0 / 64
    assert affine_ok


def test_criterion_6_ablation_hooks(tmp_path):
    # constructed field defect: a zeroed slab interrupts scalp growth in
    # one region while the volume beyond stays occupied
    tc = tmp_path / "defect"
    rc = main(["synth", "--style", "straight", "--strands", "3000",
               "--out", str(tc), "--views", "4", "--image-size", "256",
               "--grid-res", "96", "--tube-radius", "0.004",
               "--orbit-radius", str(ORBIT_RADIUS), "--seed", "2"])
    assert rc == 0
    field = sf.load_field(tc / "field.hfld")
    v = field.vectors.copy()
    nx, ny = v.shape[0], v.shape[1]
    v[2 * nx // 3:, ny // 3: 2 * ny // 3, :] = 0.0  # kill a +X slab mid-height
    sf.save_field(sf.HybridField(v, field.aabb), tc / "defect.hfld")

    step = 0.25 * float(field.voxel_size.min())
    common = ["--field", str(tc / "defect.hfld"),
              "--roots", str(tc / "strands.hair"),
              "--testcase", str(tc), "--step", f"{step:.8f}",
              "--max-points", "900", "--max-seeds", "512", "--seed", "2",
              "--skip-filter", "--skip-buzzcut"]
    assert main(["grow", *common, "--out", str(tc / "c1.hair"),
                 "--skip-segments"]) == 0
    assert main(["grow", *common, "--out", str(tc / "full.hair")]) == 0

    cams, _, _, masks = load_testcase_views(tc)
    gaps_c1 = sf.detect_coverage_gaps(sf.load_strands(tc / "c1.hair"), masks, cams)
    gaps_full = sf.detect_coverage_gaps(sf.load_strands(tc / "full.hair"), masks, cams)
    n_c1 = sum(int(g.sum()) for g in gaps_c1)
    n_full = sum(int(g.sum()) for g in gaps_full)
    ok = n_full < n_c1
    report(ok, "[6] ablation hooks (segment stage vs C1)",
           f"gap pixels: C1(--skip-segments)={n_c1}, full pipeline={n_full} "
           f"(strictly lower: {ok})")
    assert n_full < n_c1


def test_criterion_7_parallel_growth_performance(oracle_cases):
    field = sf.load_field(oracle_cases["straight"]["dir"] / "field.hfld")
    scalp = sf.canonical_scalp()
    roots, _ = sf.sample_scalp_roots(scalp, 100_000, seed=9)
    p = GrowthParams(max_points=300)

    sf.grow_from_roots(field, roots[:2000], p)  # warm caches
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        model = sf.grow_from_roots(field, roots, p)
        best = min(best, time.perf_counter() - t0)

    # sequential reference: one strand at a time through the same stepper;
    # measured on a subset and scaled linearly (the full run takes ~20 min)
    sub = roots[:500]
    pr = p.resolved(field)
    t0 = time.perf_counter()
    seq = [_integrate_batch(field, r[None, :], pr.step, pr.stop_tau, pr.max_points)
           for r in sub]
    t_seq = (time.perf_counter() - t0) * (len(roots) / len(sub))
    batch_sub = sf.grow_from_roots(field, sub, p)
    seq_identical = all(
        np.array_equal(flat, s.points)
        for (flat, _, _), s in zip(seq, batch_sub.strands))
    speedup = t_seq / best

    ok = best < 5.0 and speedup >= 4.0 and seq_identical
    report(ok, "[7] parallel growth performance",
           f"100k strands x 300 max points on 128^3: {best:.2f}s "
           f"({model.total_points()} pts, best of 3, 1-core host); sequential "
           f"reference est {t_seq:.0f}s -> speedup {speedup:.0f}x (>=4x); "
           f"identical output={seq_identical}")
    assert best < 5.0
    assert speedup >= 4.0
    assert seq_identical


def test_criterion_8_format_round_trips(oracle_cases, tmp_path):
    tc = oracle_cases["bob"]["dir"]

    model = sf.load_strands(tc / "strands.hair")
    sf.save_strands(model, tmp_path / "s.hair")
    hair_ok = (tc / "strands.hair").read_bytes() == (tmp_path / "s.hair").read_bytes()

    field = sf.load_field(tc / "field.hfld")
    sf.save_field(field, tmp_path / "f.hfld")
    hfld_ok = (tc / "field.hfld").read_bytes() == (tmp_path / "f.hfld").read_bytes()

    cams = sf.load_cameras(tc / "cameras.json")
    sf.save_cameras(cams, tmp_path / "c.json")
    cam_ok = (tc / "cameras.json").read_bytes() == (tmp_path / "c.json").read_bytes()

    om = sf.decode_orientation_png(tc / "views" / "view_000.orient.png")
    sf.encode_orientation_png(om, tmp_path / "o.png")
    om2 = sf.decode_orientation_png(tmp_path / "o.png")
    png_ok = (np.array_equal(om.mask, om2.mask)
              and angular_difference(om.angle[om.mask],
                                     om2.angle[om.mask]).max() <= np.pi / 510)

    depth = sf.load_depth_pfm(tc / "views" / "view_000.depth.pfm")
    sf.save_depth_pfm(depth, tmp_path / "d.pfm")
    pfm_ok = ((tc / "views" / "view_000.depth.pfm").read_bytes()
              == (tmp_path / "d.pfm").read_bytes())

    ok = hair_ok and hfld_ok and cam_ok and png_ok and pfm_ok
    report(ok, "[8] format round-trips",
           f".hair bit-exact={hair_ok}, .hfld bit-exact={hfld_ok}, "
           f"cameras bit-exact={cam_ok}, orientation PNG within pi/510={png_ok}, "
           f"PFM bit-exact={pfm_ok}")
    assert ok
