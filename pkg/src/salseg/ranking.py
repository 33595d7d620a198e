"""Relative saliency rank of the semantic categories in one image.

Each category present in the label mask is overlapped with the saliency
map.  The overlap survives only if it covers at least a fraction ``tau`` of
the category's pixels; survivors are ranked by the maximum saliency inside
their overlap.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .masks import (
    VOC, BinaryMask, CategoryTaxonomy, DomainError, LabelMask, SaliencyMap,
    area, category_mask, elementwise_product,
)


@dataclass(frozen=True)
class RankConfig:
    tau: float = 0.5
    saliency_floor: float = 0.0
    tie_epsilon: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"tau must be in [0, 1], got {self.tau}")
        if self.tie_epsilon < 0:
            raise DomainError("tie_epsilon must be non-negative")


@dataclass(frozen=True)
class RankEntry:
    category: int
    rank_value: float
    coverage: float
    rank_position: Optional[int] = None  # None means absent

    @property
    def ranked(self) -> bool:
        return self.rank_position is not None


@dataclass(frozen=True)
class RankTable:
    image: str
    entries: tuple = ()
    # salient pixels carrying no semantic label, reported rather than attributed
    unattributed_salient: int = 0

    def ranked(self) -> list[RankEntry]:
        return [e for e in self.entries if e.ranked]

    def by_category(self) -> dict[int, RankEntry]:
        return {e.category: e for e in self.entries}

    def to_json(self, taxonomy: CategoryTaxonomy = VOC) -> dict:
        return {
            "image": self.image,
            "entries": [
                {
                    "category": e.category,
                    "name": taxonomy.name(e.category) if e.category <= len(taxonomy) else str(e.category),
                    "rank_value": e.rank_value,
                    "coverage": e.coverage,
                    "rank_position": e.rank_position,
                }
                for e in self.entries
            ],
            "unattributed_salient": self.unattributed_salient,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RankTable":
        entries = tuple(
            RankEntry(int(e["category"]), float(e["rank_value"]), float(e["coverage"]),
                      None if e["rank_position"] is None else int(e["rank_position"]))
            for e in d["entries"]
        )
        return cls(d["image"], entries, int(d.get("unattributed_salient", 0)))


def valid_overlap(overlap: SaliencyMap, cat_mask: BinaryMask, cfg: RankConfig = RankConfig()):
    """Accept or reject a category's overlap by how much of the mask it covers.

    Returns ``(overlap, coverage)`` when ``coverage >= cfg.tau`` and
    ``(None, coverage)`` when rejected.
    """
    if overlap.shape != cat_mask.shape:
        raise DomainError(f"dimension mismatch: {overlap.shape} vs {cat_mask.shape}")
    n = area(cat_mask)
    if n == 0:
        raise DomainError("empty category mask")
    covered = np.count_nonzero((overlap.values > cfg.saliency_floor) & cat_mask.bits)
    coverage = covered / n
    return (overlap if coverage >= cfg.tau else None), coverage


def semantic_rank(sem: LabelMask, sal: SaliencyMap, cfg: RankConfig = RankConfig(),
                  image: str = "") -> RankTable:
    if sem.shape != sal.shape:
        raise DomainError(f"dimension mismatch: {sem.shape} vs {sal.shape}")
    kept, absent = [], []
    for c in sem.present():
        mask = category_mask(sem, c)
        ov, coverage = valid_overlap(elementwise_product(sal, mask), mask, cfg)
        value = float(ov.values.max()) if ov is not None else 0.0
        if ov is not None and value > cfg.saliency_floor:
            kept.append((c, value, coverage))
        else:
            absent.append(RankEntry(c, 0.0, coverage, None))
    kept.sort(key=lambda t: (-t[1], -t[2], t[0]))
    ranked = [RankEntry(c, v, cov, i + 1) for i, (c, v, cov) in enumerate(kept)]
    unattributed = int(np.count_nonzero((sal.values > cfg.saliency_floor) & (sem.labels == 0)))
    return RankTable(image, tuple(ranked + absent), unattributed)


def rank_ties(entries, eps: float = RankConfig.tie_epsilon) -> list[list[RankEntry]]:
    """Group ranked entries whose rank values lie within ``eps`` of a neighbour.

    Groups are chained: values sorted descending, a new group starts when
    the gap to the previous value exceeds ``eps``.
    """
    ranked = sorted((e for e in entries if e.ranked), key=lambda e: e.rank_position)
    groups: list[list[RankEntry]] = []
    for e in ranked:
        if groups and groups[-1][-1].rank_value - e.rank_value <= eps:
            groups[-1].append(e)
        else:
            groups.append([e])
    return groups


def tie_group_index(table: RankTable, eps: float = RankConfig.tie_epsilon) -> dict[int, int]:
    """Map each ranked category to the index of its tie group."""
    return {e.category: g for g, grp in enumerate(rank_ties(table.entries, eps)) for e in grp}
