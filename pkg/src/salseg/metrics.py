"""Saliency (max F-measure, ROC AUC, MAE) and segmentation (pixel / mean
accuracy, IoU) metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .masks import VOC, BinaryMask, CategoryTaxonomy, DomainError, LabelMask, SaliencyMap


@dataclass(frozen=True)
class MetricConfig:
    beta_squared: float = 0.3
    num_thresholds: int = 256

    def __post_init__(self):
        if self.beta_squared <= 0:
            raise DomainError("beta_squared must be positive")
        if self.num_thresholds < 2:
            raise DomainError("num_thresholds must be at least 2")

    @property
    def thresholds(self) -> np.ndarray:
        # exact quotients, so a refined grid contains the coarse one bit-for-bit
        n = self.num_thresholds
        return np.arange(n, dtype=np.float64) / (n - 1)


# --------------------------------------------------------------------------
# segmentation


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns prediction."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion(pred: LabelMask, gt: LabelMask, ignore_label: Optional[int] = None,
              num_classes: Optional[int] = None) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        raise DomainError(f"dimension mismatch: {pred.shape} vs {gt.shape}")
    n = num_classes or max(pred.num_categories, gt.num_categories) + 1
    g = gt.labels.ravel().astype(np.int64)
    p = pred.labels.ravel().astype(np.int64)
    keep = np.ones(g.shape, dtype=bool)
    if ignore_label is not None:
        keep &= g != ignore_label
    keep &= (g < n) & (p < n)
    counts = np.bincount(n * g[keep] + p[keep], minlength=n * n).reshape(n, n)
    return ConfusionMatrix(counts.astype(np.int64))


@dataclass(frozen=True)
class SegmentationScores:
    pixel_acc: float
    mean_acc: float
    per_class_iou: np.ndarray  # NaN for classes absent from both pred and gt
    miou: float

    def to_json(self, taxonomy: CategoryTaxonomy = VOC) -> dict:
        return {
            "pixel_acc": self.pixel_acc,
            "mean_acc": self.mean_acc,
            "miou": self.miou,
            "per_class_iou": {
                _class_name(taxonomy, i): (None if np.isnan(v) else float(v))
                for i, v in enumerate(self.per_class_iou)
            },
        }

    def to_csv(self, taxonomy: CategoryTaxonomy = VOC) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Pixel Acc.", "Mean Acc.", "mIoU"])
        w.writerow([f"{self.pixel_acc:.3f}", f"{self.mean_acc:.3f}", f"{self.miou:.3f}"])
        names = [_class_name(taxonomy, i) for i in range(len(self.per_class_iou))]
        w.writerow(names)
        w.writerow(["" if np.isnan(v) else f"{v:.2f}" for v in self.per_class_iou])
        return buf.getvalue()


def _class_name(taxonomy, i):
    return taxonomy.name(i) if i <= len(taxonomy) else str(i)


def segmentation_scores(cm: ConfusionMatrix) -> SegmentationScores:
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise DomainError("empty confusion matrix")
    diag = np.diag(c)
    rows, cols = c.sum(axis=1), c.sum(axis=0)
    union = rows + cols - diag
    valid = (rows + cols) > 0
    iou = np.full(len(diag), np.nan)
    iou[valid] = diag[valid] / union[valid]
    acc = np.zeros(len(diag))
    np.divide(diag, rows, out=acc, where=rows > 0)
    return SegmentationScores(
        pixel_acc=float(diag.sum() / total),
        mean_acc=float(acc[valid].mean()),
        per_class_iou=iou,
        miou=float(iou[valid].mean()),
    )


# --------------------------------------------------------------------------
# saliency


@dataclass
class SaliencyScore:
    f_measure_max: float
    auc: float
    mae: float
    pr_curve: list = field(default_factory=list)   # (threshold, precision, recall)
    roc_curve: list = field(default_factory=list)  # (fpr, tpr), fpr ascending
    degenerate: bool = False

    def to_json(self, curves: bool = False) -> dict:
        d = {"f_measure_max": self.f_measure_max, "auc": self.auc, "mae": self.mae,
             "degenerate": self.degenerate}
        if curves:
            d["pr_curve"] = [list(map(float, t)) for t in self.pr_curve]
            d["roc_curve"] = [list(map(float, t)) for t in self.roc_curve]
        return d


def threshold_counts(pred: np.ndarray, gt: np.ndarray, thresholds: np.ndarray):
    """True/false positive counts at every threshold, a pixel being positive
    when ``pred >= threshold``.  Returns ``(tp, fp, n_pos, n_neg)``."""
    pred = pred.ravel()
    gt = gt.ravel().astype(bool)
    # number of thresholds each pixel clears
    level = np.searchsorted(thresholds, pred, side="right")
    nt = len(thresholds)
    pos_hist = np.bincount(level[gt], minlength=nt + 1)
    neg_hist = np.bincount(level[~gt], minlength=nt + 1)
    # pixels with level > k clear threshold k
    tp = pos_hist[::-1].cumsum()[::-1][1:]
    fp = neg_hist[::-1].cumsum()[::-1][1:]
    return tp, fp, int(gt.sum()), int((~gt).sum())


def precision_recall(tp, fp, n_pos):
    """Precision is 0 where nothing is predicted positive; recall 0 when
    the ground truth has no positives."""
    tp = np.asarray(tp, dtype=np.float64)
    fp = np.asarray(fp, dtype=np.float64)
    prec = np.zeros_like(tp)
    np.divide(tp, tp + fp, out=prec, where=(tp + fp) > 0)
    rec = tp / n_pos if n_pos > 0 else np.zeros_like(tp)
    return prec, rec


def f_beta(prec, rec, beta_squared):
    prec = np.asarray(prec, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    den = beta_squared * prec + rec
    f = np.zeros_like(den)
    np.divide((1 + beta_squared) * prec * rec, den, out=f, where=den > 0)
    return f


def roc_auc(tp, fp, n_pos, n_neg):
    """Trapezoid area under the ROC curve including (0,0) and (1,1)."""
    tpr = np.asarray(tp, dtype=np.float64) / n_pos if n_pos else np.zeros(len(tp))
    fpr = np.asarray(fp, dtype=np.float64) / n_neg if n_neg else np.zeros(len(fp))
    # thresholds ascending -> rates descending; reverse then add endpoints
    fpr = np.r_[0.0, fpr[::-1], 1.0]
    tpr = np.r_[0.0, tpr[::-1], 1.0]
    order = np.lexsort((tpr, fpr))
    fpr, tpr = fpr[order], tpr[order]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return auc, fpr, tpr


def _check_pair(pred, gt):
    if pred.shape != gt.shape:
        raise DomainError(f"dimension mismatch: {pred.shape} vs {gt.shape}")


def saliency_scores(pred: SaliencyMap, gt: BinaryMask, cfg: MetricConfig = MetricConfig()) -> SaliencyScore:
    _check_pair(pred, gt)
    thr = cfg.thresholds
    tp, fp, n_pos, n_neg = threshold_counts(pred.values, gt.bits, thr)
    prec, rec = precision_recall(tp, fp, n_pos)
    f = f_beta(prec, rec, cfg.beta_squared)
    auc, fpr, tpr = roc_auc(tp, fp, n_pos, n_neg)
    mae = float(np.mean(np.abs(pred.values - gt.bits)))
    return SaliencyScore(
        f_measure_max=float(f.max()),
        auc=auc,
        mae=mae,
        pr_curve=list(zip(thr.tolist(), prec.tolist(), rec.tolist())),
        roc_curve=list(zip(fpr.tolist(), tpr.tolist())),
        degenerate=n_pos == 0 or n_neg == 0,
    )


def dataset_saliency_scores(preds: list[SaliencyMap], gts: list[BinaryMask],
                            cfg: MetricConfig = MetricConfig(), auc_mode: str = "per_image") -> SaliencyScore:
    """Dataset scores: precision and recall are averaged across images at each
    threshold before F is formed; AUC is averaged per image (``per_image``)
    or computed on pooled pixels (``pooled``); MAE is the per-image mean."""
    if len(preds) != len(gts):
        raise DomainError(f"{len(preds)} predictions but {len(gts)} ground truths")
    if not preds:
        raise DomainError("no images to evaluate")
    if auc_mode not in ("per_image", "pooled"):
        raise DomainError(f"unknown auc_mode {auc_mode!r}")
    thr = cfg.thresholds
    P = np.zeros(len(thr))
    R = np.zeros(len(thr))
    aucs, maes = [], []
    tp_all = np.zeros(len(thr), dtype=np.int64)
    fp_all = np.zeros(len(thr), dtype=np.int64)
    pos_all = neg_all = 0
    degenerate = False
    for pred, gt in zip(preds, gts):
        _check_pair(pred, gt)
        tp, fp, n_pos, n_neg = threshold_counts(pred.values, gt.bits, thr)
        prec, rec = precision_recall(tp, fp, n_pos)
        P += prec
        R += rec
        aucs.append(roc_auc(tp, fp, n_pos, n_neg)[0])
        maes.append(float(np.mean(np.abs(pred.values - gt.bits))))
        tp_all += tp
        fp_all += fp
        pos_all += n_pos
        neg_all += n_neg
        degenerate |= n_pos == 0 or n_neg == 0
    P /= len(preds)
    R /= len(preds)
    f = f_beta(P, R, cfg.beta_squared)
    pooled_auc, fpr, tpr = roc_auc(tp_all, fp_all, pos_all, neg_all)
    return SaliencyScore(
        f_measure_max=float(f.max()),
        auc=float(np.mean(aucs)) if auc_mode == "per_image" else pooled_auc,
        mae=float(np.mean(maes)),
        pr_curve=list(zip(thr.tolist(), P.tolist(), R.tolist())),
        roc_curve=list(zip(fpr.tolist(), tpr.tolist())),
        degenerate=degenerate,
    )


def per_image_fmax(preds, gts, cfg: MetricConfig = MetricConfig()) -> list[float]:
    return [saliency_scores(p, g, cfg).f_measure_max for p, g in zip(preds, gts)]
