"""Joint semantic segmentation and saliency: ranking, dataset statistics,
metrics and toy dual-task networks."""

from .masks import (
    IGNORE_LABEL, VOC, BinaryMask, CategoryTaxonomy, DomainError, LabelMask, SaliencyMap,
    area, category_mask, elementwise_product,
)
from .ranking import RankConfig, RankEntry, RankTable, rank_ties, semantic_rank, valid_overlap

__version__ = "0.1.0"
