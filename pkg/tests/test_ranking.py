import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rank_oracle
from salseg.masks import BinaryMask, DomainError, LabelMask, SaliencyMap
from salseg.ranking import RankConfig, RankEntry, RankTable, rank_ties, semantic_rank, valid_overlap


def test_valid_overlap_full_coverage_kept():
    mask = BinaryMask(np.ones((2, 2), bool))
    ov = SaliencyMap(np.full((2, 2), 0.7))
    kept, cov = valid_overlap(ov, mask)
    assert kept is ov and cov == 1.0


def test_valid_overlap_low_coverage_rejected():
    mask = BinaryMask(np.ones((1, 5), bool))
    ov = SaliencyMap([[0.9, 0, 0, 0, 0]])
    kept, cov = valid_overlap(ov, mask, RankConfig(tau=0.5))
    assert kept is None and cov == pytest.approx(0.2)


def test_valid_overlap_boundary_is_inclusive():
    bits = np.zeros((4, 4), bool)
    bits[:2] = True  # area 8
    vals = np.zeros((4, 4))
    vals[0] = 0.3  # 4 of the 8 pixels
    kept, cov = valid_overlap(SaliencyMap(vals), BinaryMask(bits), RankConfig(tau=0.5))
    assert kept is not None and cov == 0.5


def test_valid_overlap_empty_mask():
    with pytest.raises(DomainError):
        valid_overlap(SaliencyMap(np.zeros((2, 2))), BinaryMask(np.zeros((2, 2), bool)))


def test_two_regions_ordered_by_saliency():
    labels = np.zeros((4, 4), int)
    labels[:, :2] = 1
    labels[:, 2:] = 2
    vals = np.where(labels == 1, 0.9, 0.6)
    t = semantic_rank(LabelMask(labels, 2), SaliencyMap(vals))
    assert [(e.category, e.rank_value, e.rank_position) for e in t.entries] == [(1, 0.9, 1), (2, 0.6, 2)]


def test_zero_saliency_everything_absent():
    labels = np.array([[1, 2], [3, 0]])
    t = semantic_rank(LabelMask(labels, 3), SaliencyMap(np.zeros((2, 2))))
    assert len(t.entries) == 3 and not t.ranked()
    assert all(e.rank_value == 0 for e in t.entries)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        semantic_rank(LabelMask(np.zeros((2, 2), int), 1), SaliencyMap(np.zeros((2, 3))))


def test_unattributed_salient_pixels_reported():
    t = semantic_rank(LabelMask([[0, 1]], 1), SaliencyMap([[0.5, 0.5]]))
    assert t.unattributed_salient == 1


def test_tie_break_by_coverage_then_index():
    labels = np.array([[1, 1, 2, 2, 3, 3]])
    vals = np.array([[0.8, 0.8, 0.8, 0.0, 0.8, 0.8]])
    t = semantic_rank(LabelMask(labels, 3), SaliencyMap(vals), RankConfig(tau=0.5))
    assert [e.category for e in t.ranked()] == [1, 3, 2]


def _entries(values):
    return [RankEntry(i + 1, v, 1.0, i + 1) for i, v in enumerate(values)]


def test_rank_ties():
    cats = lambda groups: [[e.category for e in g] for g in groups]  # noqa: E731
    assert cats(rank_ties(_entries([0.9, 0.9, 0.3]))) == [[1, 2], [3]]
    assert cats(rank_ties(_entries([0.9, 0.5, 0.3]))) == [[1], [2], [3]]
    assert cats(rank_ties(_entries([0.5 + 1e-10, 0.5]))) == [[1, 2]]


def test_json_round_trip():
    t = semantic_rank(LabelMask([[1, 2]], 2), SaliencyMap([[0.4, 0.0]]), image="x")
    d = t.to_json()
    assert d["entries"][0]["name"] == "aero"
    assert d["entries"][1]["rank_position"] is None
    assert RankTable.from_json(d) == t


def _random_scene(rng, size=None):
    h, w = size or rng.integers(1, 9, size=2)
    labels = rng.integers(0, 5, size=(h, w))
    vals = rng.integers(0, 256, size=(h, w)) / 255.0
    vals[rng.random((h, w)) < 0.4] = 0.0
    return LabelMask(labels, 4), SaliencyMap(vals)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
def test_matches_pixel_oracle(seed, tau):
    sem, sal = _random_scene(np.random.default_rng(seed))
    t = semantic_rank(sem, sal, RankConfig(tau=tau))
    expected, unattributed = rank_oracle(sem.labels, sal.values, 4, tau=tau)
    got = {e.category: (e.rank_value, e.coverage, e.rank_position) for e in t.entries}
    assert got == expected
    assert t.unattributed_salient == unattributed


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_rank_table_invariants(seed):
    sem, sal = _random_scene(np.random.default_rng(seed))
    t = semantic_rank(sem, sal)
    ranked = t.ranked()
    assert [e.rank_position for e in ranked] == list(range(1, len(ranked) + 1))
    assert all(a.rank_value >= b.rank_value for a, b in zip(ranked, ranked[1:]))
    assert t.entries[:len(ranked)] == tuple(ranked)
    assert all(not e.ranked for e in t.entries if e.rank_value == 0)
