import numpy as np
import pytest

import strandfield as sf


def capsule_distance(centers, a, b):
    """Exact point-to-segment distance, the analytic tube oracle."""
    ab = b - a
    ll = ab @ ab
    q = centers - a
    t = np.clip((q @ ab) / ll, 0.0, 1.0)
    return np.linalg.norm(q - t[..., None] * ab, axis=-1)


def voxel_centers(field):
    lo, _ = field.aabb.astype(np.float64)
    vox = field.voxel_size
    axes = [lo[i] + (np.arange(field.resolution[i]) + 0.5) * vox[i] for i in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def unit_field(seed=0, n=8):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, n, n, 3))
    v /= np.linalg.norm(v, axis=3, keepdims=True)
    return sf.HybridField(v.astype(np.float32), np.array([[0, 0, 0], [1.0, 1.0, 1.0]]))


# ---------------------------------------------------------------- bake

def test_gridspec_validation():
    with pytest.raises(ValueError):
        sf.GridSpec(resolution=(4, 64, 64))
    with pytest.raises(ValueError):
        sf.GridSpec(tube_radius=-1.0)
    with pytest.raises(ValueError):
        sf.GridSpec(aabb=np.array([[0, 0, 0], [0, 1, 1]]))


def test_bake_empty_model_rejected():
    with pytest.raises(ValueError):
        sf.bake_field(sf.HairModel([]), sf.GridSpec())


def test_bake_single_straight_strand(tube_field):
    model, field = tube_field
    mags = field.magnitudes()
    occupied = mags > 0.1
    # every occupied voxel holds exactly the strand direction
    assert np.allclose(field.vectors[occupied], [0, 1, 0], atol=1e-6)
    # a voxel three voxel-sizes from the axis is outside the default tube
    nx = field.resolution[0]
    assert np.array_equal(field.vectors[nx // 2 + 3 + 1, nx // 2, nx // 2], [0, 0, 0])


def test_bake_magnitude_regime(tube_field):
    _, field = tube_field
    mags = field.magnitudes()
    occ = mags[mags > 0]
    assert np.abs(occ - 1.0).max() <= 1e-4


def test_bake_occupancy_matches_analytic_capsule_128():
    pts = np.stack([np.zeros(50), np.linspace(-0.1, 0.1, 50), np.zeros(50)],
                   axis=1).astype(np.float32)
    model = sf.HairModel([sf.Strand(pts)])
    aabb = np.array([[-0.15, -0.15, -0.15], [0.15, 0.15, 0.15]])
    field = sf.bake_field(model, sf.GridSpec(resolution=(128, 128, 128), aabb=aabb))
    r = 1.5 * np.linalg.norm(field.voxel_size)
    d = capsule_distance(voxel_centers(field), np.array([0, -0.1, 0.0]),
                         np.array([0, 0.1, 0.0]))
    analytic = d <= r
    baked = field.magnitudes() > 0.1
    iou = (analytic & baked).sum() / (analytic | baked).sum()
    assert iou > 0.95


def test_bake_antiparallel_fallback():
    up = np.stack([np.zeros(30), np.linspace(-0.05, 0.05, 30), np.zeros(30)], axis=1)
    down = up[::-1].copy()
    down[:, 0] += 1e-5  # overlapping but not identical points
    model = sf.HairModel([sf.Strand(up.astype(np.float32)),
                          sf.Strand(down.astype(np.float32))])
    aabb = np.array([[-0.1, -0.1, -0.1], [0.1, 0.1, 0.1]])
    field = sf.bake_field(model, sf.GridSpec(resolution=(32, 32, 32), aabb=aabb))
    mags = field.magnitudes()
    occ = mags[mags > 0]
    # cancellation resolved by the nearest-segment fallback: still unit
    assert np.abs(occ - 1.0).max() <= 1e-4
    mid = field.vectors[16, 16, 16]
    assert abs(np.linalg.norm(mid) - 1.0) <= 1e-4
    assert abs(abs(mid[1]) - 1.0) <= 1e-3  # one of the two directions


def test_bake_auto_box_contains_model():
    rng = np.random.default_rng(2)
    pts = np.cumsum(rng.standard_normal((40, 3)) * 0.005, axis=0).astype(np.float32)
    model = sf.HairModel([sf.Strand(pts)])
    field = sf.bake_field(model, sf.GridSpec(resolution=(16, 16, 16)))
    lo, hi = field.aabb.astype(np.float64)
    assert (model.bounds[0] >= lo - 1e-6).all()
    assert (model.bounds[1] <= hi + 1e-6).all()


# ---------------------------------------------------------------- sampling

def test_sample_voxel_center_identity():
    f = unit_field()
    c = np.array([(3 + 0.5) / 8, (2 + 0.5) / 8, (5 + 0.5) / 8])
    assert np.array_equal(sf.sample_field(f, c).astype(np.float32), f.vectors[3, 2, 5])


def test_sample_midpoint_average():
    f = unit_field()
    mid = np.array([(3 + 0.5) / 8 + 1 / 16, (2 + 0.5) / 8, (5 + 0.5) / 8])
    expect = (f.vectors[3, 2, 5].astype(np.float64)
              + f.vectors[4, 2, 5].astype(np.float64)) / 2
    assert np.abs(sf.sample_field(f, mid) - expect).max() <= 1e-6


def test_sample_outside_exact_zero():
    f = unit_field()
    assert np.array_equal(sf.sample_field(f, np.array([2.0, 0.5, 0.5])), np.zeros(3))
    far = np.array([[-5.0, 0.5, 0.5], [0.5, 0.5, 1.0 + 1e-9], [100, 100, 100]])
    assert np.array_equal(sf.sample_field(f, far), np.zeros((3, 3)))


def test_sample_lipschitz_bound():
    f = unit_field(seed=3)
    rng = np.random.default_rng(4)
    x = rng.uniform(0.05, 0.95, (5000, 3))
    delta = rng.standard_normal((5000, 3))
    delta /= np.linalg.norm(delta, axis=1)[:, None]
    delta *= 1e-6 * 0.125
    diff = np.linalg.norm(sf.sample_field(f, x + delta) - sf.sample_field(f, x), axis=1)
    assert (diff <= 4 * 1e-6).all()


def test_occupancy_inside_outside(tube_field):
    _, field = tube_field
    assert sf.occupancy(field, np.array([0.0, 0.0, 0.0]))
    assert not sf.occupancy(field, np.array([0.14, 0.14, 0.14]))
    assert not sf.occupancy(field, np.array([5.0, 0.0, 0.0]))


def test_occupancy_monotone_in_tau(tube_field):
    _, field = tube_field
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.15, 0.15, (5000, 3))
    occ_02 = sf.occupancy(field, pts, tau=0.2)
    occ_01 = sf.occupancy(field, pts, tau=0.1)
    assert (occ_02 <= occ_01).all()


def test_occupancy_line_scan_no_reentry(tube_field):
    # marching outward along the tube normal: occupancy flips true->false once
    _, field = tube_field
    xs = np.linspace(0.0, 0.14, 400)
    pts = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=1)
    occ = sf.occupancy(field, pts, tau=0.1).astype(int)
    assert occ[0] == 1
    assert (np.diff(occ) >= -1).all()
    assert np.count_nonzero(np.diff(occ)) == 1


# ---------------------------------------------------------------- metrics

def test_field_metrics_self():
    _, field = unit_field(), None
    model = sf.HairModel([sf.Strand(np.stack(
        [np.zeros(20), np.linspace(-0.05, 0.05, 20), np.zeros(20)], axis=1).astype(np.float32))])
    f = sf.bake_field(model, sf.GridSpec(resolution=(32, 32, 32)))
    stats = sf.field_orientation_mse(f, f, n_samples=2000, seed=0)
    assert stats.l1_mean == 0.0 and stats.mse == 0.0
    iou, prec = sf.occupancy_iou_precision(f, f, n_samples=20000, seed=0)
    assert (iou, prec) == (1.0, 1.0)


def test_field_metrics_rotated_axes():
    shape = (16, 16, 16)
    gt = np.zeros(shape + (3,), dtype=np.float32)
    gt[..., 1] = 1.0
    pred = np.zeros(shape + (3,), dtype=np.float32)
    pred[..., 0] = 1.0
    box = np.array([[0, 0, 0], [1.0, 1.0, 1.0]])
    stats = sf.field_orientation_mse(sf.HybridField(pred, box), sf.HybridField(gt, box),
                                     n_samples=4000, seed=1)
    assert stats.l1_mean == pytest.approx(2.0 / 3.0, abs=1e-6)
    assert stats.mse == pytest.approx(2.0 / 3.0, abs=1e-6)


def test_field_metrics_sentinels():
    shape = (16, 16, 16)
    box = np.array([[0, 0, 0], [1.0, 1.0, 1.0]])
    gt = np.zeros(shape + (3,), dtype=np.float32)
    gt[4:12, 4:12, 4:12, 1] = 1.0
    empty = sf.HybridField(np.zeros(shape + (3,), dtype=np.float32), box)
    iou, prec = sf.occupancy_iou_precision(empty, sf.HybridField(gt, box),
                                           n_samples=20000, seed=0)
    assert iou == 0.0 and prec == 1.0
    both_empty = sf.occupancy_iou_precision(empty, empty, n_samples=1000, seed=0)
    assert both_empty == (1.0, 1.0)


def test_field_mse_empty_gt_raises():
    box = np.array([[0, 0, 0], [1.0, 1.0, 1.0]])
    empty = sf.HybridField(np.zeros((16, 16, 16, 3), dtype=np.float32), box)
    with pytest.raises(ValueError, match="no occupied region"):
        sf.field_orientation_mse(empty, empty, n_samples=100, seed=0)


def test_field_metrics_aabb_mismatch():
    a = sf.HybridField(np.zeros((8, 8, 8, 3), np.float32), np.array([[0, 0, 0], [1, 1, 1.0]]))
    b = sf.HybridField(np.zeros((8, 8, 8, 3), np.float32), np.array([[0, 0, 0], [2, 1, 1.0]]))
    with pytest.raises(ValueError):
        sf.occupancy_iou_precision(a, b)


def test_dilated_tube_vs_voxel_count_oracle(tube_field):
    from scipy.ndimage import binary_dilation
    _, gt = tube_field
    occ = gt.magnitudes() > 0.1
    dil = binary_dilation(occ, np.ones((3, 3, 3), bool))
    pred_vec = np.zeros(dil.shape + (3,), dtype=np.float32)
    pred_vec[dil, 1] = 1.0
    pred = sf.HybridField(pred_vec, gt.aabb)
    iou, prec = sf.occupancy_iou_precision(pred, gt, n_samples=400_000, seed=2)
    # exact voxel counting gives the expectation; the sampled estimate sees
    # trilinear boundary bands, so agreement is loose but bounded
    exact_iou = (dil & occ).sum() / (dil | occ).sum()
    exact_prec = (dil & occ).sum() / dil.sum()
    assert 0.0 < iou < 1.0
    assert prec < 1.0
    assert abs(iou - exact_iou) <= 0.05
    assert abs(prec - exact_prec) <= 0.05


# ---------------------------------------------------------------- file I/O

def test_hfld_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    v = rng.standard_normal((64, 64, 64, 3)).astype(np.float32)
    f = sf.HybridField(v, np.array([[-0.2, -0.1, -0.3], [0.1, 0.2, 0.25]]))
    p = tmp_path / "f.hfld"
    sf.save_field(f, p)
    g = sf.load_field(p)
    assert np.array_equal(f.vectors, g.vectors)
    assert np.array_equal(f.aabb, g.aabb)
    # second save byte-identical
    p2 = tmp_path / "f2.hfld"
    sf.save_field(g, p2)
    assert p.read_bytes() == p2.read_bytes()


def test_hfld_anisotropic_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    v = rng.standard_normal((8, 16, 24, 3)).astype(np.float32)
    f = sf.HybridField(v, np.array([[0, 0, 0], [1.0, 2.0, 3.0]]))
    sf.save_field(f, tmp_path / "a.hfld")
    g = sf.load_field(tmp_path / "a.hfld")
    assert g.resolution == (8, 16, 24)
    assert np.array_equal(f.vectors, g.vectors)


def test_hfld_bad_magic(tmp_path):
    p = tmp_path / "bad.hfld"
    p.write_bytes(b"XXXX" + bytes(64))
    with pytest.raises(ValueError, match="magic"):
        sf.load_field(p)


def test_hfld_truncated(tmp_path):
    import struct
    p = tmp_path / "t.hfld"
    p.write_bytes(b"HFLD" + struct.pack("<III", 128, 128, 128)
                  + np.zeros(6, "<f4").tobytes() + bytes(100))
    with pytest.raises(ValueError, match="truncated"):
        sf.load_field(p)
