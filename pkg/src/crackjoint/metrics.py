"""Threshold-swept segmentation metrics and image-quality metrics."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .imaging import distance_transform

PSNR_CAP = 100.0
DEFAULT_THRESHOLDS = np.round(np.arange(1, 100) / 100.0, 2)


def _check_same(a, b):
    if np.shape(a) != np.shape(b):
        raise ParameterError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def _check_thresholds(thresholds) -> np.ndarray:
    t = np.asarray(thresholds, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(t >= 1) or np.any(np.diff(t) <= 0):
        raise ParameterError("thresholds must be strictly increasing values in (0, 1)")
    return t


def iou(pred, gt) -> float:
    """Intersection over union of two binary masks; 1.0 when both are empty."""
    _check_same(pred, gt)
    p, g = np.asarray(pred, bool), np.asarray(gt, bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def _directed_hd95(src: np.ndarray, dst: np.ndarray) -> float:
    return float(np.percentile(distance_transform(dst)[src], 95))


def hd95(pred, gt) -> float:
    """Symmetric 95th-percentile Hausdorff distance between foreground pixel sets.

    Both empty gives 0; exactly one empty gives the image diagonal.
    """
    _check_same(pred, gt)
    p, g = np.asarray(pred, bool), np.asarray(gt, bool)
    if not p.any() and not g.any():
        return 0.0
    if not p.any() or not g.any():
        return float(np.hypot(*p.shape))
    return max(_directed_hd95(p, g), _directed_hd95(g, p))


@dataclass
class SweepResult:
    thresholds: np.ndarray
    values: np.ndarray          # mean over images, one per threshold
    per_image: np.ndarray       # (n_images, n_thresholds)
    best: float
    average: float
    best_threshold: float


def _sweep(metric, preds, gts, thresholds, maximize: bool) -> SweepResult:
    t = _check_thresholds(DEFAULT_THRESHOLDS if thresholds is None else thresholds)
    preds, gts = list(preds), list(gts)
    if not preds or len(preds) != len(gts):
        raise ParameterError("need the same non-zero number of predictions and ground truths")
    table = np.empty((len(preds), t.size))
    for i, (p, g) in enumerate(zip(preds, gts)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g) > 0.5
        _check_same(p, g)
        for j, th in enumerate(t):
            table[i, j] = metric(p >= th, g)
    values = table.mean(axis=0)
    k = int(np.argmax(values) if maximize else np.argmin(values))
    # rounding can push the mean of a flat curve just outside [min, max]
    average = float(np.clip(values.mean(), values.min(), values.max()))
    return SweepResult(t, values, table, float(values[k]), average, float(t[k]))


def iou_sweep(preds, gts, thresholds=None) -> SweepResult:
    """Mean IoU per threshold; ``best`` is IoU_max and ``average`` is AIU."""
    return _sweep(iou, preds, gts, thresholds, maximize=True)


def hd95_sweep(preds, gts, thresholds=None) -> SweepResult:
    """Mean HD95 per threshold; ``best`` is HD95_min and ``average`` is AHD95."""
    return _sweep(hd95, preds, gts, thresholds, maximize=False)


def psnr(a, b, peak: float = 1.0) -> float:
    _check_same(a, b)
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse)))


def kernel_psnr(pred_kernel, gt_kernel) -> float:
    """PSNR between kernels with the ground-truth kernel maximum as peak."""
    return psnr(pred_kernel, gt_kernel, peak=float(np.max(gt_kernel)))


def ssim(a, b, data_range: float = 1.0) -> float:
    """SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over the valid region and channels."""
    _check_same(a, b)
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if min(a.shape[:2]) < 11:
        raise ParameterError("SSIM needs images of at least 11x11")
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    r = 5

    def filt(x):
        return ndimage.gaussian_filter(x, sigma=1.5, truncate=3.5, mode="reflect")[r:-r, r:-r]

    scores = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        scores.append(s.mean())
    return float(np.mean(scores))


@dataclass
class MetricReport:
    IoU_max: float
    AIU: float
    HD95_min: float
    AHD95: float
    iou_threshold: float
    hd95_threshold: float
    thresholds: list
    iou_curve: list
    hd95_curve: list
    PSNR: float | None = None
    SSIM: float | None = None
    kernel_PSNR: float | None = None
    per_image: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def check(self) -> None:
        if not self.IoU_max >= self.AIU:
            raise AssertionError("IoU_max < AIU")
        if not self.HD95_min <= self.AHD95:
            raise AssertionError("HD95_min > AHD95")
        if not all(0.0 <= v <= 1.0 for v in self.iou_curve):
            raise AssertionError("IoU outside [0, 1]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "mean_IoU", "mean_HD95"])
        for t, i, h in zip(self.thresholds, self.iou_curve, self.hd95_curve):
            w.writerow([repr(t), repr(i), repr(h)])
        return buf.getvalue()


def evaluate(preds, gts, names=None, thresholds=None, sr=None, hr=None,
             pred_kernels=None, gt_kernels=None, meta=None) -> MetricReport:
    """Build a MetricReport from probability maps and binary ground truths.

    SR/HR images and kernels are optional; their metrics are image means.
    """
    preds, gts = list(preds), list(gts)
    ious = iou_sweep(preds, gts, thresholds)
    hds = hd95_sweep(preds, gts, thresholds)
    names = list(names) if names is not None else [f"{i:04d}" for i in range(len(preds))]
    k_iou = int(np.searchsorted(ious.thresholds, ious.best_threshold))
    k_hd = int(np.searchsorted(hds.thresholds, hds.best_threshold))
    per_image = []
    for i, name in enumerate(names):
        row = {"name": name, "IoU_at_best": float(ious.per_image[i, k_iou]),
               "HD95_at_best": float(hds.per_image[i, k_hd])}
        if sr is not None:
            row["PSNR"] = psnr(sr[i], hr[i])
            row["SSIM"] = ssim(sr[i], hr[i])
        if pred_kernels is not None:
            row["kernel_PSNR"] = kernel_psnr(pred_kernels[i], gt_kernels[i])
        per_image.append(row)
    report = MetricReport(
        IoU_max=ious.best, AIU=ious.average, HD95_min=hds.best, AHD95=hds.average,
        iou_threshold=ious.best_threshold, hd95_threshold=hds.best_threshold,
        thresholds=[float(t) for t in ious.thresholds],
        iou_curve=[float(v) for v in ious.values], hd95_curve=[float(v) for v in hds.values],
        per_image=per_image, meta=dict(meta or {}),
    )
    if sr is not None:
        report.PSNR = float(np.mean([r["PSNR"] for r in per_image]))
        report.SSIM = float(np.mean([r["SSIM"] for r in per_image]))
    if pred_kernels is not None:
        report.kernel_PSNR = float(np.mean([r["kernel_PSNR"] for r in per_image]))
    report.check()
    return report
