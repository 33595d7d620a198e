"""Dataset-level aggregation of rank tables.

Produces the per-category distribution (overall / salient / salient alone /
rank-k counts), the co-salient co-occurrence matrix, and the pairwise
precedence probabilities.  Both aggregates are plain integer counts under
the hood, so partial results from disjoint image sets merge with ``+``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .masks import VOC, CategoryTaxonomy, DomainError, LabelMask
from .ranking import RankConfig, RankTable, tie_group_index

RANKS = (1, 2, 3)


@dataclass
class CategoryDistribution:
    """Arrays are indexed by category - 1 (background is not tracked)."""

    overall: np.ndarray
    salient: np.ndarray
    salient_alone: np.ndarray
    rank_counts: np.ndarray  # (len(RANKS), C)

    @classmethod
    def zeros(cls, num_categories: int) -> "CategoryDistribution":
        z = lambda *s: np.zeros(s, dtype=np.int64)  # noqa: E731
        return cls(z(num_categories), z(num_categories), z(num_categories),
                   z(len(RANKS), num_categories))

    @property
    def num_categories(self) -> int:
        return self.overall.shape[0]

    @property
    def distrib(self) -> np.ndarray:
        return _safe_div(self.salient, self.overall)

    @property
    def rank_fracs(self) -> np.ndarray:
        return _safe_div(self.rank_counts, self.salient[None, :])

    @property
    def rank_fracs_overall(self) -> np.ndarray:
        """Rank-k counts relative to all images containing the category."""
        return _safe_div(self.rank_counts, self.overall[None, :])

    def __add__(self, other: "CategoryDistribution") -> "CategoryDistribution":
        return CategoryDistribution(self.overall + other.overall, self.salient + other.salient,
                                    self.salient_alone + other.salient_alone,
                                    self.rank_counts + other.rank_counts)

    def to_json(self, taxonomy: CategoryTaxonomy = VOC) -> dict:
        out = {}
        for i in range(self.num_categories):
            row = {
                "overall": int(self.overall[i]),
                "salient": int(self.salient[i]),
                "salient_alone": int(self.salient_alone[i]),
                "distrib": float(self.distrib[i]),
            }
            for k, r in enumerate(RANKS):
                row[f"rank{r}"] = int(self.rank_counts[k, i])
                row[f"rank{r}_frac"] = float(self.rank_fracs[k, i])
            out[taxonomy.name(i + 1)] = row
        return out

    def to_csv(self, taxonomy: CategoryTaxonomy = VOC) -> str:
        """One column per category, one row per statistic (table layout)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["categories", *[taxonomy.name(i + 1) for i in range(self.num_categories)]])
        w.writerow(["overall", *self.overall.tolist()])
        w.writerow(["salient", *self.salient.tolist()])
        w.writerow(["salient alone", *self.salient_alone.tolist()])
        w.writerow(["Distrib", *[f"{v:.2f}" for v in self.distrib]])
        for k, r in enumerate(RANKS):
            w.writerow([f"Rank-{r}", *self.rank_counts[k].tolist()])
            w.writerow([f"Rank-{r}(%)", *[f"{v:.2f}" for v in self.rank_fracs[k]]])
        return buf.getvalue()


@dataclass
class CooccurrenceMatrix:
    """``counts[a, b]`` images where both are salient; ``higher[a, b]`` of
    those where ``a`` is ranked strictly above ``b``; ``ties`` the rest."""

    counts: np.ndarray
    higher: np.ndarray
    ties: np.ndarray

    @classmethod
    def zeros(cls, num_categories: int) -> "CooccurrenceMatrix":
        z = lambda: np.zeros((num_categories, num_categories), dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z())

    @property
    def num_categories(self) -> int:
        return self.counts.shape[0]

    @property
    def precedence(self) -> np.ndarray:
        """P(row ranked above column); NaN where the pair never co-occurs."""
        with np.errstate(invalid="ignore", divide="ignore"):
            p = self.higher / self.counts
        p[self.counts == 0] = np.nan
        return p

    def __add__(self, other: "CooccurrenceMatrix") -> "CooccurrenceMatrix":
        return CooccurrenceMatrix(self.counts + other.counts, self.higher + other.higher,
                                  self.ties + other.ties)

    def to_json(self, taxonomy: CategoryTaxonomy = VOC) -> dict:
        p = self.precedence
        return {
            "categories": [taxonomy.name(i + 1) for i in range(self.num_categories)],
            "counts": self.counts.tolist(),
            "ties": self.ties.tolist(),
            "precedence": [[None if np.isnan(v) else float(v) for v in row] for row in p],
        }

    def to_csv(self, taxonomy: CategoryTaxonomy = VOC) -> str:
        """Counts block followed by a precedence block, both C x C."""
        names = [taxonomy.name(i + 1) for i in range(self.num_categories)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["counts", *names])
        for name, row in zip(names, self.counts):
            w.writerow([name, *row.tolist()])
        w.writerow(["precedence", *names])
        for name, row in zip(names, self.precedence):
            w.writerow([name, *["" if np.isnan(v) else f"{v:.2f}" for v in row]])
        return buf.getvalue()


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.broadcast_to(np.asarray(den, dtype=np.float64), num.shape)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _num_categories(sems, default=len(VOC)):
    return sems[0].num_categories if sems else default


def distribution(tables: list[RankTable], sems: list[LabelMask],
                 num_categories: int | None = None) -> CategoryDistribution:
    if len(tables) != len(sems):
        raise DomainError(f"{len(tables)} rank tables but {len(sems)} semantic masks")
    C = num_categories or _num_categories(sems)
    d = CategoryDistribution.zeros(C)
    for t, sem in zip(tables, sems):
        present = sem.present()
        if set(e.category for e in t.entries) != set(present):
            raise DomainError(f"rank table {t.image!r} does not match its semantic mask")
        for c in present:
            d.overall[c - 1] += 1
        for e in t.ranked():
            d.salient[e.category - 1] += 1
            if len(present) == 1:
                d.salient_alone[e.category - 1] += 1
            if e.rank_position in RANKS:
                d.rank_counts[e.rank_position - 1, e.category - 1] += 1
    return d


def cooccurrence(tables: list[RankTable], num_categories: int = len(VOC),
                 tie_epsilon: float = RankConfig.tie_epsilon) -> CooccurrenceMatrix:
    m = CooccurrenceMatrix.zeros(num_categories)
    for t in tables:
        ranked = t.ranked()
        if len(ranked) < 2:
            continue
        group = tie_group_index(t, tie_epsilon)
        idx = np.array([e.category - 1 for e in ranked])
        pos = np.array([group[e.category] for e in ranked])
        both = np.ix_(idx, idx)
        off = ~np.eye(len(idx), dtype=bool)
        m.counts[both] += off
        m.higher[both] += pos[:, None] < pos[None, :]
        m.ties[both] += off & (pos[:, None] == pos[None, :])
    return m


@dataclass(frozen=True)
class CaseStudyRow:
    category: int
    count: int
    focus_higher: float
    other_higher: float


def case_study(tables: list[RankTable], focus: int, k: int = 7,
               num_categories: int = len(VOC),
               tie_epsilon: float = RankConfig.tie_epsilon) -> list[CaseStudyRow]:
    """Top-``k`` co-salient partners of ``focus`` with both precedence directions."""
    if not 1 <= focus <= num_categories:
        raise DomainError(f"focus category {focus} outside 1..{num_categories}")
    m = cooccurrence(tables, num_categories, tie_epsilon)
    p = m.precedence
    f = focus - 1
    partners = [j for j in range(num_categories) if j != f and m.counts[f, j] > 0]
    partners.sort(key=lambda j: (-m.counts[f, j], j))
    return [CaseStudyRow(j + 1, int(m.counts[f, j]), float(p[f, j]), float(p[j, f]))
            for j in partners[:k]]


def case_study_csv(rows: list[CaseStudyRow], focus: int,
                   taxonomy: CategoryTaxonomy = VOC) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fname = taxonomy.name(focus)
    w.writerow(["*", *[taxonomy.name(r.category) for r in rows]])
    w.writerow([f"Salient (with {fname})", *[r.count for r in rows]])
    w.writerow([f"% {fname}", *[f"{r.focus_higher:.2f}" for r in rows]])
    w.writerow(["% other", *[f"{r.other_higher:.2f}" for r in rows]])
    return buf.getvalue()


def plot_distribution(d: CategoryDistribution, path, taxonomy: CategoryTaxonomy = VOC):
    """Three-panel grouped bar chart of rank-1/2/3 statistics, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [taxonomy.name(i + 1) for i in range(d.num_categories)]
    x = np.arange(d.num_categories)
    colors = ("tab:blue", "tab:green", "gold")
    panels = (
        ("count", d.rank_counts, False),
        ("fraction of salient", d.rank_fracs, False),
        ("fraction of appearances", d.rank_fracs_overall, True),
    )
    with plt.rc_context({"svg.hashsalt": "salseg", "svg.fonttype": "none"}):
        fig, axes = plt.subplots(1, 3, figsize=(15, 4))
        for ax, (label, values, log) in zip(axes, panels):
            for k, r in enumerate(RANKS):
                ax.bar(x + (k - 1) * 0.27, values[k], width=0.27, color=colors[k], label=f"rank-{r}")
            ax.set_xticks(x, names, rotation=90)
            ax.set_ylabel(label)
            if log:
                ax.set_yscale("log")
        axes[0].legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
