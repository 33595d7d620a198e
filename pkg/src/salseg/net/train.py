"""Gradients, plain gradient-descent training and finite-difference checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..masks import DomainError
from . import ops
from .loss import LossTerms, as_label_array, loss_terms
from .model import ForwardOutputs, VariantConfig, build_graph, downsample_labels, init_params

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def _prepare_gts(sem_gt, sal_gt, out_hw):
    """Bring ground truths to prediction resolution as (n, h, w) int arrays."""
    sem = as_label_array(sem_gt)
    sal = as_label_array(sal_gt)
    if sem.shape[1:] != out_hw:
        sem = downsample_labels(sem, out_hw)
    if sal.shape[1:] != out_hw:
        sal = downsample_labels(sal, out_hw)
    return sem, sal


def loss_and_grads(cfg: VariantConfig, params, x, sem_gt, sal_gt, ignore_label=None):
    """Joint loss and its exact gradient for every parameter.

    Ground truths at input resolution are downsampled to the prediction size.
    Returns ``(LossTerms, grads)``.
    """
    outputs, nodes = build_graph(x, cfg, params)
    out = ForwardOutputs(*(None if o is None else o.value for o in outputs))
    sem, sal = _prepare_gts(sem_gt, sal_gt, out.S_theta.shape[2:])
    terms, seeds = loss_terms(out, sem, sal, ignore_label)
    ops.backprop([o for o in outputs if o is not None], seeds)
    grads = {k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in nodes.items()}
    return terms, grads


def backward(cfg: VariantConfig, params, x, sem_gt, sal_gt, ignore_label=None) -> dict[str, np.ndarray]:
    return loss_and_grads(cfg, params, x, sem_gt, sal_gt, ignore_label)[1]


def evaluate_loss(cfg: VariantConfig, params, x, sem_gt, sal_gt, ignore_label=None) -> LossTerms:
    outputs, _ = build_graph(x, cfg, params)
    out = ForwardOutputs(*(None if o is None else o.value for o in outputs))
    sem, sal = _prepare_gts(sem_gt, sal_gt, out.S_theta.shape[2:])
    return loss_terms(out, sem, sal, ignore_label)[0]


def stack_dataset(dataset):
    """``[(image (3,h,w) or (1,3,h,w), sem, sal), ...]`` -> batched arrays."""
    if not dataset:
        raise DomainError("empty dataset")
    xs, sems, sals = [], [], []
    for x, sem, sal in dataset:
        x = np.asarray(x, dtype=np.float64)
        xs.append(x if x.ndim == 4 else x[None])
        sems.append(as_label_array(sem))
        sals.append(as_label_array(sal))
    return np.concatenate(xs), np.concatenate(sems), np.concatenate(sals)


def train(cfg: VariantConfig, dataset, lr: float = 0.1, steps: int = 500, seed: int = 0,
          params=None, ignore_label=None):
    """Full-batch gradient descent.  Returns ``(params, loss_trace)`` where the
    trace holds the loss measured before each update."""
    if lr < 0:
        raise DomainError("learning rate must be non-negative")
    x, sem, sal = stack_dataset(dataset)
    params = init_params(cfg, seed) if params is None else {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    trace = []
    for step in range(steps):
        terms, grads = loss_and_grads(cfg, params, x, sem, sal, ignore_label)
        if not np.isfinite(terms.total):
            raise TrainingError(step, f"loss is {terms.total}")
        trace.append(terms.total)
        for k in params:
            params[k] -= lr * grads[k]
        if step % 100 == 0:
            log.debug("step %d loss %.6f", step, terms.total)
    return params, trace


@dataclass
class GradCheckResult:
    max_rel_err: float
    worst_param: str
    num_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def report(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} worst={self.worst_param} "
                f"checked={self.num_checked} tol={self.tolerance:g}")


def relative_error(a, b, floor=1e-8):
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numerical_grads(cfg, params, x, sem_gt, sal_gt, step=1e-5, names=None):
    """Central finite differences of the joint loss for every parameter entry."""
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    num = {}
    for name in names or params:
        p = params[name]
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = evaluate_loss(cfg, params, x, sem_gt, sal_gt).total
            flat[i] = orig - step
            down = evaluate_loss(cfg, params, x, sem_gt, sal_gt).total
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        num[name] = g
    return num


def gradcheck(cfg, params, x, sem_gt, sal_gt, step=1e-5, tolerance=1e-4, floor=1e-8) -> GradCheckResult:
    analytic = backward(cfg, params, x, sem_gt, sal_gt)
    numeric = numerical_grads(cfg, params, x, sem_gt, sal_gt, step)
    worst, worst_name, count = 0.0, "", 0
    for name in analytic:
        err = relative_error(analytic[name], numeric[name], floor)
        count += err.size
        if err.size and err.max() > worst:
            worst, worst_name = float(err.max()), name
    return GradCheckResult(worst, worst_name, count, tolerance)
