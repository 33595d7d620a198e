"""Raster value types and the small amount of mask algebra everything else uses.

Arrays are stored row-major as ``(height, width)`` numpy arrays with the
origin at the top-left pixel.  All types are frozen and their arrays are
made read-only on construction, so instances can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Label value for pixels excluded from every statistic (VOC "void").
IGNORE_LABEL = 255

VOC_CATEGORIES = (
    "aero", "bike", "bird", "boat", "bottle", "bus", "car", "cat", "chair",
    "cow", "table", "dog", "horse", "mbike", "person", "plant", "sheep",
    "sofa", "train", "tv",
)


class DomainError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CategoryTaxonomy:
    names: tuple = VOC_CATEGORIES
    background_index: int = 0

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise DomainError("category names must be unique")
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.names)

    def name(self, index: int) -> str:
        if index == self.background_index:
            return "background"
        return self.names[index - 1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name) + 1
        except ValueError:
            raise DomainError(f"unknown category {name!r}") from None


VOC = CategoryTaxonomy()


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel category indices; 0 is background, 1..C foreground.

    ``IGNORE_LABEL`` is also accepted so VOC void borders survive loading.
    """

    labels: np.ndarray
    num_categories: int = len(VOC_CATEGORIES)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DomainError(f"label mask must be 2-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0):
            raise DomainError("negative label values")
        bad = np.setdiff1d(np.unique(labels), np.r_[np.arange(self.num_categories + 1), IGNORE_LABEL])
        if bad.size:
            raise DomainError(f"label values out of range [0, {self.num_categories}]: {bad.tolist()}")
        object.__setattr__(self, "labels", _frozen(labels, np.uint8))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape

    def present(self) -> list[int]:
        """Foreground categories that occur at least once, ascending."""
        u = np.unique(self.labels)
        return [int(c) for c in u if 0 < c <= self.num_categories]

    def __eq__(self, other):
        return (isinstance(other, LabelMask) and self.num_categories == other.num_categories
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"saliency map must be 2-D, got shape {values.shape}")
        if values.size and not (np.all(values >= 0.0) and np.all(values <= 1.0)):
            raise DomainError("saliency values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(values, np.float64))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return isinstance(other, SaliencyMap) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray = field()

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise DomainError(f"binary mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits, bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")


def category_mask(m: LabelMask, c: int) -> BinaryMask:
    if not 1 <= c <= m.num_categories:
        raise DomainError(f"category {c} outside 1..{m.num_categories}")
    return BinaryMask(m.labels == c)


def elementwise_product(f: SaliencyMap, b: BinaryMask) -> SaliencyMap:
    _check_same_shape(f, b)
    return SaliencyMap(np.where(b.bits, f.values, 0.0))


def area(b: BinaryMask) -> int:
    return int(np.count_nonzero(b.bits))
