import numpy as np
import pytest

from oracles import mae_oracle, saliency_sweep_oracle, segmentation_oracle
from salseg.masks import BinaryMask, DomainError, LabelMask, SaliencyMap
from salseg.metrics import (
    ConfusionMatrix, MetricConfig, confusion, dataset_saliency_scores, saliency_scores,
    segmentation_scores,
)


def lm(a, c=3):
    return LabelMask(np.asarray(a), c)


def test_confusion_identity_is_diagonal():
    a = np.array([[0, 1], [2, 3]])
    cm = confusion(lm(a), lm(a))
    assert np.array_equal(cm.counts, np.diag(np.diag(cm.counts)))
    assert cm.total == 4


def test_confusion_2x2_hand_example():
    pred = lm([[1, 1], [2, 2]])
    gt = lm([[1, 2], [1, 2]])
    cm = confusion(pred, gt)
    assert cm.counts[1, 2] == 1 and cm.counts[2, 1] == 1
    assert cm.counts[1, 1] == 1 and cm.counts[2, 2] == 1
    s = segmentation_scores(cm)
    assert s.per_class_iou[1] == pytest.approx(1 / 3, abs=1e-15)
    assert s.per_class_iou[2] == pytest.approx(1 / 3, abs=1e-15)
    assert s.miou == pytest.approx(1 / 3, abs=1e-15)
    assert np.isnan(s.per_class_iou[0])


def test_confusion_ignore_and_empty():
    gt = LabelMask([[255, 255]], 3)
    cm = confusion(lm([[1, 2]]), gt, ignore_label=255)
    assert cm.total == 0
    with pytest.raises(DomainError):
        segmentation_scores(cm)


def test_confusion_dimension_mismatch():
    with pytest.raises(DomainError):
        confusion(lm([[1, 2]]), lm([[1], [2]]))


def test_identity_scores():
    a = np.array([[0, 1, 1], [2, 3, 3]])
    s = segmentation_scores(confusion(lm(a), lm(a)))
    assert s.pixel_acc == 1 and s.miou == 1 and s.mean_acc == 1


def test_confusion_additivity():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 4, (2, 5, 7)), rng.integers(0, 4, (2, 5, 7))
    joined = confusion(lm(np.hstack([a[0], b[0]])), lm(np.hstack([a[1], b[1]])))
    assert joined == confusion(lm(a[0]), lm(a[1])) + confusion(lm(b[0]), lm(b[1]))


def test_relabel_symmetry():
    rng = np.random.default_rng(1)
    pred, gt = rng.integers(0, 4, (2, 8, 8))
    perm = np.array([2, 0, 3, 1])
    s = segmentation_scores(confusion(lm(pred), lm(gt)))
    t = segmentation_scores(confusion(lm(perm[pred]), lm(perm[gt])))
    assert t.miou == pytest.approx(s.miou, abs=1e-15)
    np.testing.assert_allclose(t.per_class_iou[perm], s.per_class_iou)


@pytest.mark.parametrize("seed", range(20))
def test_segmentation_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 17, 2)
    pred, gt = rng.integers(0, 5, (2, h, w))
    s = segmentation_scores(confusion(LabelMask(pred, 4), LabelMask(gt, 4)))
    acc, macc, iou, miou = segmentation_oracle(pred, gt, 5)
    assert abs(s.pixel_acc - acc) < 1e-12 and abs(s.mean_acc - macc) < 1e-12 and abs(s.miou - miou) < 1e-12
    for c, v in iou.items():
        assert abs(s.per_class_iou[c] - v) < 1e-12


def test_perfect_saliency():
    gt = np.zeros((6, 6), bool)
    gt[1:4, 2:5] = True
    s = saliency_scores(SaliencyMap(gt.astype(float)), BinaryMask(gt))
    assert s.f_measure_max == 1 and s.auc == 1 and s.mae == 0 and not s.degenerate


def test_constant_half_prediction():
    rng = np.random.default_rng(2)
    gt = rng.random((8, 8)) > 0.6
    s = saliency_scores(SaliencyMap(np.full((8, 8), 0.5)), BinaryMask(gt))
    assert s.auc == 0.5
    assert s.mae == 0.5


def test_degenerate_ground_truth_flagged():
    s = saliency_scores(SaliencyMap(np.full((2, 2), 0.3)), BinaryMask(np.zeros((2, 2), bool)))
    assert s.degenerate and s.f_measure_max == 0


@pytest.mark.parametrize("seed", range(20))
def test_saliency_matches_oracles(seed):
    rng = np.random.default_rng(seed)
    pred = rng.random((8, 8))
    gt = rng.random((8, 8)) > 0.5
    cfg = MetricConfig()
    s = saliency_scores(SaliencyMap(pred), BinaryMask(gt), cfg)
    f, auc = saliency_sweep_oracle(pred, gt, cfg.num_thresholds, cfg.beta_squared)
    assert abs(s.mae - mae_oracle(pred, gt)) < 1e-12
    assert abs(s.f_measure_max - f) < 1e-9
    assert abs(s.auc - auc) < 1e-9


def test_auc_complement():
    rng = np.random.default_rng(4)
    # values on a grid strictly between thresholds so no ties across the grid
    pred = (rng.integers(0, 255, (10, 10)) + 0.5) / 255
    gt = rng.random((10, 10)) > 0.5
    a = saliency_scores(SaliencyMap(pred), BinaryMask(gt)).auc
    b = saliency_scores(SaliencyMap(1 - pred), BinaryMask(gt)).auc
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_fmax_monotone_under_refinement():
    rng = np.random.default_rng(5)
    pred, gt = SaliencyMap(rng.random((12, 12))), BinaryMask(rng.random((12, 12)) > 0.4)
    prev = 0.0
    for n in (2, 3, 5, 9, 17, 33, 65, 129, 257):
        f = saliency_scores(pred, gt, MetricConfig(num_thresholds=n)).f_measure_max
        assert f >= prev
        prev = f


def test_dataset_scores_average_pr():
    rng = np.random.default_rng(6)
    preds = [SaliencyMap(rng.random((6, 6))) for _ in range(4)]
    gts = [BinaryMask(rng.random((6, 6)) > 0.5) for _ in range(4)]
    s = dataset_saliency_scores(preds, gts)
    singles = [saliency_scores(p, g) for p, g in zip(preds, gts)]
    assert s.mae == pytest.approx(np.mean([x.mae for x in singles]))
    assert s.auc == pytest.approx(np.mean([x.auc for x in singles]))
    P = np.mean([[t[1] for t in x.pr_curve] for x in singles], axis=0)
    R = np.mean([[t[2] for t in x.pr_curve] for x in singles], axis=0)
    F = 1.3 * P * R / np.where(0.3 * P + R > 0, 0.3 * P + R, 1)
    assert s.f_measure_max == pytest.approx(F.max())
    pooled = dataset_saliency_scores(preds, gts, auc_mode="pooled")
    allp = SaliencyMap(np.hstack([p.values for p in preds]))
    allg = BinaryMask(np.hstack([g.bits for g in gts]))
    assert pooled.auc == pytest.approx(saliency_scores(allp, allg).auc, abs=1e-12)


def test_config_validation():
    with pytest.raises(DomainError):
        MetricConfig(beta_squared=0)
    with pytest.raises(DomainError):
        MetricConfig(num_thresholds=1)


def test_cm_zeros():
    assert ConfusionMatrix.zeros(3).total == 0
