import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from salseg.masks import (
    IGNORE_LABEL, VOC, BinaryMask, DomainError, LabelMask, SaliencyMap, area, category_mask,
    elementwise_product,
)


def test_category_mask_uniform():
    m = LabelMask(np.full((3, 4), 3), 5)
    assert category_mask(m, 3) == BinaryMask(np.ones((3, 4), bool))
    assert category_mask(m, 1) == BinaryMask(np.zeros((3, 4), bool))


def test_category_mask_2x2():
    m = LabelMask([[1, 2], [1, 0]], 2)
    assert category_mask(m, 1).bits.tolist() == [[True, False], [True, False]]


@pytest.mark.parametrize("c", [0, 3, -1])
def test_category_mask_out_of_range(c):
    with pytest.raises(DomainError):
        category_mask(LabelMask([[1, 2]], 2), c)


def test_elementwise_product():
    f = SaliencyMap([[0.9, 0.4]])
    assert elementwise_product(f, BinaryMask([[True, False]])).values.tolist() == [[0.9, 0.0]]
    assert elementwise_product(f, BinaryMask([[True, True]])) == f
    assert not elementwise_product(f, BinaryMask([[False, False]])).values.any()


def test_elementwise_product_shape_mismatch():
    with pytest.raises(DomainError):
        elementwise_product(SaliencyMap(np.zeros((2, 2))), BinaryMask(np.zeros((2, 3), bool)))


def test_area():
    assert area(BinaryMask(np.ones((4, 4), bool))) == 16
    assert area(BinaryMask(np.zeros((4, 4), bool))) == 0
    assert area(BinaryMask([[True, False], [True, False]])) == 2


def test_saliency_out_of_range_is_rejected():
    with pytest.raises(DomainError):
        SaliencyMap([[0.5, 1.2]])
    with pytest.raises(DomainError):
        SaliencyMap([[-0.1]])


def test_label_out_of_range_is_rejected():
    with pytest.raises(DomainError):
        LabelMask([[0, 4]], 3)
    LabelMask([[0, IGNORE_LABEL]], 3)  # void survives


def test_values_are_immutable():
    m = LabelMask([[1, 0]], 1)
    with pytest.raises(ValueError):
        m.labels[0, 0] = 0


def test_taxonomy_order():
    assert VOC.names[0] == "aero" and VOC.names[-1] == "tv"
    assert VOC.index("person") == 15
    assert VOC.name(0) == "background"


label_masks = arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 5))


@given(label_masks)
def test_category_masks_partition_the_image(labels):
    m = LabelMask(labels, 5)
    total = sum(area(category_mask(m, c)) for c in range(1, 6))
    assert total + area(BinaryMask(labels == 0)) == labels.size


@settings(max_examples=50)
@given(label_masks, st.integers(0, 2**32 - 1))
def test_product_idempotent_and_bounded(labels, seed):
    rng = np.random.default_rng(seed)
    f = SaliencyMap(rng.random(labels.shape))
    b = BinaryMask(labels > 2)
    once = elementwise_product(f, b)
    assert elementwise_product(once, b) == once
    assert area(BinaryMask(once.values > 0)) <= area(b)
