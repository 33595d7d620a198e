"""Pixel-wise cross-entropy and the joint three-term loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..masks import BinaryMask, DomainError, LabelMask
from .model import ForwardOutputs


def as_label_array(gt) -> np.ndarray:
    """(n, h, w) integer labels from a mask object, a list of them, or an array."""
    if isinstance(gt, (LabelMask, BinaryMask)):
        gt = [gt]
    if isinstance(gt, (list, tuple)):
        gt = np.stack([g.labels if isinstance(g, LabelMask) else g.bits if isinstance(g, BinaryMask)
                       else np.asarray(g) for g in gt])
    a = np.asarray(gt)
    if a.ndim == 2:
        a = a[None]
    return a.astype(np.int64)


def cross_entropy_loss(logits, gt, ignore_label: Optional[int] = None):
    """Mean negative log-softmax probability of the true class.

    Returns ``(loss, dloss/dlogits)``.  Pixels equal to ``ignore_label`` are
    left out of both the mean and the gradient.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = as_label_array(gt)
    n, K, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise DomainError(f"labels of shape {labels.shape} do not match logits {logits.shape}")
    valid = np.ones(labels.shape, dtype=bool) if ignore_label is None else labels != ignore_label
    bad = labels[valid]
    bad = bad[(bad < 0) | (bad >= K)]
    if bad.size:
        raise DomainError(f"labels {sorted(set(bad.tolist()))} out of range for {K} classes")
    count = int(valid.sum())
    if count == 0:
        return 0.0, np.zeros_like(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    safe = np.where(valid, labels, 0)
    picked = np.take_along_axis(log_p, safe[:, None], axis=1)[:, 0]
    loss = float(-(picked * valid).sum() / count)
    grad = np.exp(log_p)
    np.put_along_axis(grad, safe[:, None], np.take_along_axis(grad, safe[:, None], axis=1) - 1.0, axis=1)
    grad *= valid[:, None] / count
    return loss, grad


@dataclass(frozen=True)
class LossTerms:
    semantic: float
    saliency: float
    refined: float = 0.0
    has_refined: bool = False

    @property
    def total(self) -> float:
        return self.semantic + self.saliency + self.refined


def loss_terms(out: ForwardOutputs, sem_gt, sal_gt, ignore_label=None):
    """Per-term losses and logits gradients: ``(LossTerms, grads)``."""
    l_sem, g_sem = cross_entropy_loss(out.S_theta, sem_gt, ignore_label)
    l_sal, g_sal = cross_entropy_loss(out.S_d, sal_gt)
    grads = [g_sem, g_sal]
    if out.S_d_r is None:
        return LossTerms(l_sem, l_sal), grads
    l_ref, g_ref = cross_entropy_loss(out.S_d_r, sal_gt)
    grads.append(g_ref)
    return LossTerms(l_sem, l_sal, l_ref, True), grads


def total_loss(out: ForwardOutputs, sem_gt, sal_gt, ignore_label=None) -> float:
    """Semantic + saliency + refined-saliency loss (last only when present)."""
    return loss_terms(out, sem_gt, sal_gt, ignore_label)[0].total
