import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featloss.masks import BinaryMask
from featloss.metrics import (
    PSNR_CAP,
    SSIM_C1,
    Trajectory,
    associate,
    ate_rmse,
    candidate_pairs,
    feat_metric,
    l1_percent,
    metric_report,
    pr_curve,
    psnr,
    shadow_mask,
    shadow_scores,
    ssim,
    ssim_map,
    umeyama_alignment,
)
from featloss.synthetic import box_blur, piecewise_scene

from oracles import pr_enumerate, rigid_residual_bruteforce


def img(seed, shape=(32, 32)):
    return np.random.default_rng(seed).random(shape)[None]


def quarter_mask(shape=(32, 32)):
    m = np.zeros(shape, bool)
    m[: shape[0] // 2, : shape[1] // 2] = True
    return m


# -- L1 ----------------------------------------------------------------------


def test_l1_identical():
    a = img(0)
    r = l1_percent(a, a, quarter_mask())
    assert (r.full, r.inside, r.outside) == (0.0, 0.0, 0.0)


def test_l1_constant_diff():
    a = np.full((1, 8, 8), 0.5)
    r = l1_percent(a, a + 0.05, quarter_mask((8, 8)))
    assert r.full == pytest.approx(5.0) and r.inside == pytest.approx(5.0) and r.outside == pytest.approx(5.0)


def test_l1_diff_inside_quarter():
    a = np.full((1, 8, 8), 0.5)
    m = quarter_mask((8, 8))
    b = a.copy()
    b[0][m] += 0.1
    r = l1_percent(a, b, m)
    assert r.full == pytest.approx(2.5) and r.inside == pytest.approx(10.0) and r.outside == 0.0


def test_l1_region_decomposition():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.random((1, 16, 16)), rng.random((1, 16, 16))
        m = rng.random((16, 16)) > 0.6
        r = l1_percent(a, b, m)
        assert abs(r.full - (r.n_in * r.inside + r.n_out * r.outside) / r.n_full) < 1e-9


def test_l1_empty_region_flagged():
    a = img(2)
    r = l1_percent(a, a, np.zeros((32, 32), bool))
    assert r.inside is None and r.empty == ("in",)


# -- PSNR --------------------------------------------------------------------


def test_psnr_cap_and_closed_forms():
    a = np.full((1, 8, 8), 0.3)
    assert psnr(a, a) == PSNR_CAP
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
    assert psnr(a, a + 10 / 255) == pytest.approx(28.130803608679106, abs=1e-9)
    assert psnr(a, a + 10 / 255) == pytest.approx(20 * math.log10(25.5), abs=1e-12)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(3)
    a = rng.random((1, 16, 16)) * 0.5 + 0.25
    noise = rng.uniform(-1, 1, a.shape)
    vals = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


# -- SSIM --------------------------------------------------------------------


def test_ssim_identical_is_one():
    for s in range(5):
        a = img(s, (20, 24))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_zero_vs_one():
    assert ssim(np.zeros((1, 10, 10)), np.ones((1, 10, 10))) == pytest.approx(SSIM_C1 / (1 + SSIM_C1), rel=1e-12)


def test_ssim_symmetric_and_bounded():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a, b = rng.random((1, 16, 16)), rng.random((1, 16, 16))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)
        smap = ssim_map(a, b)
        assert smap.min() >= -1 and smap.max() <= 1


def test_ssim_window_oracle():
    rng = np.random.default_rng(5)
    a, b = rng.random((10, 11)), rng.random((10, 11))
    smap = ssim_map(a[None], b[None])
    i, j = 2, 3
    x, y = a[i : i + 8, j : j + 8], b[i : i + 8, j : j + 8]
    c2 = 0.03**2
    want = ((2 * x.mean() * y.mean() + SSIM_C1) * (2 * np.mean((x - x.mean()) * (y - y.mean())) + c2)) / (
        (x.mean() ** 2 + y.mean() ** 2 + SSIM_C1) * (x.var() + y.var() + c2)
    )
    assert smap[i, j] == pytest.approx(want, rel=1e-10)


def test_ssim_region_too_small():
    a = img(6, (12, 12))
    m = np.zeros((12, 12), bool)
    m[0, 0] = True
    assert ssim(a, a, m) is None


# -- Feat --------------------------------------------------------------------


def test_feat_identical_and_blurred():
    rng = np.random.default_rng(7)
    y = piecewise_scene(rng)
    m = np.zeros((64, 64), bool)
    m[16:48, 16:48] = True
    r = feat_metric(y, y, m)
    assert (r.full, r.inside, r.outside) == (0.0, 0.0, 0.0)
    r = feat_metric(y, box_blur(y[0], 5)[None], m)
    assert r.full > 0 and r.inside > 0


def test_feat_region_without_cells():
    y = img(8)
    m = np.zeros((32, 32), bool)
    m[0, 0] = True  # pixel 0 is never a cell centre
    r = feat_metric(y, y, m)
    assert r.inside is None and "in" in r.empty


# -- shadows -----------------------------------------------------------------


def test_shadow_mask_examples():
    stat = np.full((1, 6, 6), 0.5)
    obj = np.zeros((6, 6), bool)
    obj[:2, :2] = True
    assert not shadow_mask(stat, stat, obj, 0.1).values.any()
    dyn = stat.copy()
    dyn[0, :2, :2] = 0.0
    assert not shadow_mask(dyn, stat, obj, 0.1).values.any()
    dyn = stat.copy()
    dyn[0, 4, 3] += 0.2
    got = shadow_mask(dyn, stat, obj, 0.1).values
    assert got.sum() == 1 and got[4, 3]


def test_shadow_scores_examples():
    gt = np.zeros((4, 4), bool)
    gt[:2] = True
    assert shadow_scores(BinaryMask(gt), BinaryMask(gt)).as_tuple() == (1.0, 1.0, 1.0, 1.0)
    assert shadow_scores(BinaryMask(~gt), BinaryMask(gt)).iou == 0.0
    half = np.zeros((4, 4), bool)
    half[0] = True
    s = shadow_scores(BinaryMask(half), BinaryMask(gt))
    assert (s.iou, s.shadow_acc, s.non_shadow_acc) == (0.5, 0.5, 1.0)
    assert s.total_acc == pytest.approx(12 / 16)


def test_shadow_scores_empty_union():
    z = BinaryMask(np.zeros((3, 3)))
    s = shadow_scores(z, z)
    assert s.iou == 1.0 and s.shadow_acc is None and s.total_acc == 1.0


def test_metric_report_keys():
    rng = np.random.default_rng(9)
    real = piecewise_scene(rng)
    fake = np.clip(real + rng.normal(0, 0.02, real.shape), 0, 1)
    m = np.zeros((64, 64), bool)
    m[20:40, 20:40] = True
    rep = metric_report(real, fake, m, dyn=real).as_dict()
    assert set(rep) == {"l1_percent", "psnr", "ssim", "feat", "pixels", "shadow"}
    assert rep["pixels"]["in"] + rep["pixels"]["out"] == rep["pixels"]["full"]


# -- place recognition -------------------------------------------------------


def test_candidate_pairs():
    i, j = candidate_pairs(5, 1)
    assert list(zip(i.tolist(), j.tolist())) == [(0, 2), (0, 3), (0, 4), (1, 3), (1, 4), (2, 4)]


def test_pr_three_frame_toy():
    pos = np.array([[0, 0, 0], [50, 0, 0], [3, 0, 0]], float)
    s = np.array([[0, 0.2, 0.9], [0.2, 0, 0.4], [0.9, 0.4, 0]])
    curve = pr_curve(s, pos, thresholds=[0.1, 0.3, 0.5, 1.0], exclusion=0)
    want = pr_enumerate(s, pos, 10.0, [0.1, 0.3, 0.5, 1.0], 0)
    for k, (p, r) in enumerate(want):
        assert curve.precision[k] == p and curve.recall[k] == r
    assert curve.precision[2] == 1.0 and curve.recall[2] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_pr_matches_enumeration_five_frames(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 20, (5, 3))
    s = rng.random((5, 5))
    thr = np.linspace(0, 1, 7)
    curve = pr_curve(s, pos, thresholds=thr, exclusion=1)
    for k, (p, r) in enumerate(pr_enumerate(s, pos, 10.0, thr, 1)):
        assert curve.precision[k] == p
        assert (math.isnan(r) and math.isnan(curve.recall[k])) or curve.recall[k] == r


def test_pr_no_positives_flagged():
    pos = np.arange(15, dtype=float)[:, None] * np.array([[100.0, 0, 0]])
    curve = pr_curve(np.random.default_rng(0).random((15, 15)), pos, exclusion=2)
    assert "no_positive_pairs" in curve.flags and np.isnan(curve.recall).all()


def test_pr_perfect_scores():
    rng = np.random.default_rng(11)
    pos = rng.uniform(0, 40, (30, 3))
    d = np.linalg.norm(pos[:, None] - pos[None], axis=2)
    s = np.where(d < 10, 0.9, 0.1)
    curve = pr_curve(s, pos, thresholds=[0.5], exclusion=3)
    assert curve.precision[0] == 1.0 and curve.recall[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_pr_recall_grows_as_threshold_drops(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 30, (12, 3))
    curve = pr_curve(rng.random((12, 12)), pos, exclusion=2)
    if curve.n_positive:
        assert np.all(np.diff(curve.recall) >= 0)


def test_pr_rejects_bad_shapes():
    with pytest.raises(ValueError):
        pr_curve(np.zeros((3, 4)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        pr_curve(np.zeros((3, 3)), np.zeros((3, 2)))


# -- trajectories ------------------------------------------------------------


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def square_path(n=40):
    t = np.linspace(0, 4, n, endpoint=False)
    side = np.floor(t).astype(int)
    f = t - side
    corners = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 0]], float)
    pts = corners[side] + f[:, None] * (corners[side + 1] - corners[side])
    pts[:, 2] = 0.1 * np.sin(3 * t)
    return pts


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0, 1, 1], np.zeros((3, 3)))


def test_ate_identical_is_zero():
    p = square_path()
    gt = Trajectory(np.arange(len(p)) * 0.1, p)
    assert ate_rmse(gt, gt) < 1e-12


def test_ate_rigid_transform_is_zero():
    rng = np.random.default_rng(12)
    p = square_path()
    r = random_rotation(rng)
    gt = Trajectory(np.arange(len(p)) * 0.1, p)
    est = Trajectory(gt.stamps + 0.005, p @ r.T + rng.normal(size=3))
    assert ate_rmse(gt, est, "rigid") < 1e-9


def test_ate_scaled_path():
    p = square_path()
    gt = Trajectory(np.arange(len(p)) * 0.1, p)
    est = Trajectory(gt.stamps, 2.0 * p)
    assert ate_rmse(gt, est, "similarity") < 1e-9
    rigid = ate_rmse(gt, est, "rigid")
    assert rigid > 0
    assert rigid == pytest.approx(rigid_residual_bruteforce(2.0 * p, p), rel=1e-6)


def test_umeyama_recovers_similarity():
    rng = np.random.default_rng(13)
    src = rng.normal(size=(20, 3))
    r = random_rotation(rng)
    dst = 1.7 * src @ r.T + np.array([1.0, -2.0, 0.5])
    s, rr, t = umeyama_alignment(src, dst, with_scale=True)
    assert s == pytest.approx(1.7, rel=1e-12)
    np.testing.assert_allclose(rr, r, atol=1e-12)


def test_associate_within_tolerance():
    gt = Trajectory([0.0, 0.1, 0.2, 0.3], np.zeros((4, 3)))
    est = Trajectory([0.005, 0.13, 0.21, 0.31], np.zeros((4, 3)))
    g, e = associate(gt, est)
    assert g.tolist() == [0, 2, 3] and e.tolist() == [0, 2, 3]


def test_ate_too_few_associations():
    gt = Trajectory([0.0, 1.0, 2.0], np.zeros((3, 3)))
    est = Trajectory([0.5, 1.5, 2.5], np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ate_rmse(gt, est)
