import numpy as np
import pytest

from crackjoint.errors import ParameterError
from crackjoint.metrics import (DEFAULT_THRESHOLDS, MetricReport, evaluate, hd95, hd95_sweep, iou,
                                iou_sweep, kernel_psnr, psnr, ssim)
from oracles import brute_hd95


def test_threshold_grid():
    assert len(DEFAULT_THRESHOLDS) == 99
    assert DEFAULT_THRESHOLDS[0] == 0.01 and DEFAULT_THRESHOLDS[-1] == 0.99


# IoU --------------------------------------------------------------------------

def test_iou_examples():
    a = np.array([1, 1, 0, 0], bool)
    assert iou(a, a) == 1.0
    assert iou(a, ~a) == 0.0
    assert iou([1, 1, 0], [0, 1, 1]) == pytest.approx(1 / 3)
    assert iou(np.zeros(4), np.zeros(4)) == 1.0
    with pytest.raises(ParameterError):
        iou(np.zeros(3), np.zeros(4))


def test_iou_symmetric_and_nested_monotone():
    rng = np.random.default_rng(0)
    for _ in range(30):
        gt = rng.random((10, 10)) < 0.4
        b = gt & (rng.random((10, 10)) < 0.7)
        a = b & (rng.random((10, 10)) < 0.7)
        assert iou(a, gt) <= iou(b, gt)
        x = rng.random((10, 10)) < 0.3
        assert iou(x, gt) == iou(gt, x)


def _naive_sweep(metric, preds, gts, ts):
    out = []
    for t in ts:
        vals = []
        for p, g in zip(preds, gts):
            vals.append(metric(p >= t, g > 0.5))
        out.append(sum(vals) / len(vals))
    return np.array(out)


def test_iou_sweep_matches_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(50):
        preds = [rng.random((12, 12)) for _ in range(5)]
        gts = [rng.random((12, 12)) < 0.2 for _ in range(5)]
        s = iou_sweep(preds, gts)
        ref = _naive_sweep(iou, preds, gts, DEFAULT_THRESHOLDS)
        assert np.array_equal(s.values, ref)
        assert s.best == ref.max() and s.average == ref.mean()
        assert s.best >= s.average


def test_binary_predictions_give_flat_sweep():
    rng = np.random.default_rng(2)
    preds = [(rng.random((8, 8)) < 0.3).astype(float) for _ in range(3)]
    gts = [rng.random((8, 8)) < 0.3 for _ in range(3)]
    s = iou_sweep(preds, gts)
    assert np.all(s.values == s.values[0])
    assert s.best == pytest.approx(s.average, abs=1e-15)


def test_flat_sweep_average_stays_within_range():
    # 99 copies of 0.1 average to slightly less than 0.1 in floating point
    assert np.full(99, 0.1).mean() < 0.1
    pred = np.zeros((10, 10))
    gt = np.zeros((10, 10), bool)
    pred[0, 0] = gt[0, 0] = 1
    gt[9, 9] = True
    s = iou_sweep([pred], [gt])
    assert s.best == s.average == 0.5
    h = hd95_sweep([pred], [gt])
    assert h.best <= h.average and h.best == h.values[0]


def test_sweep_threshold_validation():
    with pytest.raises(ParameterError):
        iou_sweep([np.zeros((2, 2))], [np.zeros((2, 2))], [0.5, 0.4])
    with pytest.raises(ParameterError):
        iou_sweep([np.zeros((2, 2))], [np.zeros((2, 2))], [0.0, 0.5])
    with pytest.raises(ParameterError):
        iou_sweep([], [])


# HD95 -------------------------------------------------------------------------

def test_hd95_examples():
    m = np.zeros((10, 10), bool)
    m[2, 3] = True
    assert hd95(m, m) == 0.0
    n = np.zeros((10, 10), bool)
    n[5, 7] = True
    assert hd95(m, n) == pytest.approx(5.0)
    assert hd95(np.zeros((6, 8)), np.zeros((6, 8))) == 0.0
    assert hd95(m, np.zeros((10, 10))) == pytest.approx(np.hypot(10, 10))


def test_hd95_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(60):
        a = np.zeros((24, 24), bool)
        b = np.zeros((24, 24), bool)
        for m in (a, b):
            n = int(rng.integers(1, 65))
            m[rng.integers(0, 24, n), rng.integers(0, 24, n)] = True
        assert hd95(a, b) == pytest.approx(brute_hd95(a, b), abs=1e-9)
        assert hd95(a, b) == hd95(b, a)


def test_hd95_sweep_matches_double_loop():
    rng = np.random.default_rng(4)
    for _ in range(50):
        preds = [rng.random((10, 10)) for _ in range(5)]
        gts = [rng.random((10, 10)) < 0.15 for _ in range(5)]
        s = hd95_sweep(preds, gts)
        ref = _naive_sweep(hd95, preds, gts, DEFAULT_THRESHOLDS)
        np.testing.assert_allclose(s.values, ref, atol=1e-12)
        assert s.best <= s.average


def test_hd95_perfect_predictions():
    rng = np.random.default_rng(5)
    gts = [rng.random((8, 8)) < 0.2 for _ in range(3)]
    s = hd95_sweep([g.astype(float) for g in gts], gts)
    assert s.best == 0.0 and s.average == 0.0


# PSNR / SSIM ----------------------------------------------------------------

def test_psnr_examples():
    a = np.random.default_rng(0).random((8, 8)) * 0.8
    assert psnr(a + 0.1, a) == pytest.approx(20.0)
    assert psnr(a, a) == 100.0
    k = np.full((21, 21), 1 / 441)
    assert kernel_psnr(k, k) == 100.0
    with pytest.raises(ParameterError):
        psnr(a, a[:4])


def test_kernel_psnr_uses_gt_peak():
    k = np.zeros((3, 3))
    k[1, 1] = 0.5
    k[0, 0] = 0.5
    pred = k + 0.05
    assert kernel_psnr(pred, k) == pytest.approx(10 * np.log10(0.25 / 0.0025))


def test_ssim_identity_and_reference():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(1)
    a = rng.random((40, 36, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    ref = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, channel_axis=2)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


# reports ----------------------------------------------------------------------

def _random_eval(seed):
    rng = np.random.default_rng(seed)
    preds = [rng.random((16, 16)) for _ in range(4)]
    gts = [rng.random((16, 16)) < 0.1 for _ in range(4)]
    hr = [rng.random((16, 16, 3)) for _ in range(4)]
    sr = [np.clip(h + rng.normal(0, 0.05, h.shape), 0, 1) for h in hr]
    k = [np.full((21, 21), 1 / 441) for _ in range(4)]
    return evaluate(preds, gts, sr=sr, hr=hr, pred_kernels=k, gt_kernels=k, meta={"seed": seed})


def test_report_invariants_and_fields():
    for seed in range(10):
        r = _random_eval(seed)
        assert r.IoU_max >= r.AIU and r.HD95_min <= r.AHD95
        assert r.kernel_PSNR == 100.0 and 0 < r.SSIM < 1
        assert len(r.per_image) == 4 and len(r.iou_curve) == 99
        assert r.iou_curve[DEFAULT_THRESHOLDS.tolist().index(r.iou_threshold)] == r.IoU_max


def test_report_bit_identical_and_roundtrip():
    a, b = _random_eval(7), _random_eval(7)
    assert a.to_json() == b.to_json()
    assert a.sweep_csv() == b.sweep_csv()
    assert MetricReport.from_dict(a.to_dict()).to_json() == a.to_json()


def test_report_check_catches_violations():
    r = _random_eval(0)
    r.AIU = r.IoU_max + 0.1
    with pytest.raises(AssertionError):
        r.check()
