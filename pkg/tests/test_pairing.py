import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accon.errors import DomainError
from accon.geometry import LabelRange
from accon.pairing import BinConfig, bin_index, build_pair_sets

import _reference as ref

R = LabelRange(y_min=0, y_max=100)


def test_bin_index_examples():
    cfg = BinConfig(count=100, range=R)
    assert bin_index(0.0, cfg) == 0
    assert bin_index(100.0, cfg) == 99
    assert bin_index(21.7, cfg) == 21


def test_bin_index_width_mode_and_edges():
    cfg = BinConfig(width=7.0, range=R)
    assert cfg.n_bins == 15
    edges = cfg.edges()
    assert edges[0] == 0 and edges[-1] == 100 and len(edges) == 16
    assert bin_index(99.9, cfg) == 14 and bin_index(100.0, cfg) == 14


def test_bin_index_out_of_range():
    with pytest.raises(DomainError):
        bin_index(100.01, BinConfig(range=R))


def test_bin_config_rejects_both_modes():
    with pytest.raises(ValueError):
        BinConfig(count=10, width=2.0)


def test_pair_set_examples():
    cfg = BinConfig(count=100, range=R)
    p = build_pair_sets([5, 5], cfg)
    assert p.positives(0) == [1] and p.negatives(0) == []
    p = build_pair_sets([5, 5, 80, 80], cfg)
    assert p.positives(0) == [1] and p.negatives(0) == [2, 3]
    assert p.batch_size_2n == 4


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    y = np.round(rng.uniform(0, 100, 12), 1)
    y[rng.integers(12)] = 100.0
    p = build_pair_sets(y, BinConfig(width=5.0, range=R))
    pos, neg = ref.pair_sets(list(y), 0, 100, 5.0)
    for i in range(12):
        assert p.positives(i) == pos[i]
        assert p.negatives(i) == neg[i]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=10), st.floats(0.5, 30))
def test_partition_and_symmetry(half, width):
    y = np.concatenate([half, half])
    p = build_pair_sets(y, BinConfig(width=width, range=R))
    n = len(y)
    assert np.array_equal(p.positive, p.positive.T)
    assert not (p.positive & p.negative).any()
    assert not np.diag(p.positive).any() and not np.diag(p.negative).any()
    assert np.all(p.positive.sum(1) + p.negative.sum(1) == n - 1)
    # two views always give each anchor its twin as a positive
    assert np.all(p.n_positives >= 1)
