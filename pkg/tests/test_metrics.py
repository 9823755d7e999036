import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accon.errors import ContractError, DomainError
from accon.geometry import LabelRange, ideal_angle
from accon.metrics import compute_metrics, geometry_report, shot_split_metrics

import _reference as ref

R = LabelRange(y_min=0, y_max=100)


def test_perfect_prediction():
    y = np.array([1.0, 2.0, 5.0])
    m = compute_metrics(y, y)
    assert (m.mae, m.mse, m.r2) == (0.0, 0.0, 1.0)
    assert m.gm == pytest.approx(0.0, abs=1e-15)


def test_hand_arithmetic():
    m = compute_metrics([1.0, 4.0], [0.0, 8.0], gm_eps=0.0)
    assert m.gm == pytest.approx(2.0, abs=1e-15)
    assert m.mae == 2.5


@pytest.mark.parametrize("seed", range(10))
def test_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    y, yhat = rng.normal(size=50), rng.normal(size=50)
    m = compute_metrics(yhat, y)
    want = ref.metrics(list(yhat), list(y), 1e-8)
    for k, v in want.items():
        assert getattr(m, k) == pytest.approx(v, abs=1e-12)


def test_errors():
    with pytest.raises(ContractError):
        compute_metrics([1.0], [1.0])
    with pytest.raises(DomainError):
        compute_metrics([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(ContractError):
        compute_metrics([1.0, 2.0], [1.0, 2.0, 3.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=30))
def test_gm_at_most_mae(errors):
    e = np.array(errors)
    y = np.arange(len(e), dtype=float)
    m = compute_metrics(y + e, y, gm_eps=0.0)
    assert m.gm <= m.mae * (1 + 1e-12)


def test_shot_routing():
    edges = np.array([0.0, 10.0, 20.0, 30.0])
    hist = np.array([150, 50, 5])
    y = np.array([5.0, 15.0, 25.0])
    out = shot_split_metrics(y + 1, y, hist, edges)
    assert out["many"].n == 1 and out["medium"].n == 1 and out["few"].n == 1
    assert out["thresholds"] == {"many_min": 100, "few_max": 20}
    assert out["few"].r2 is None


def test_shot_all_many_and_empty_subsets_absent():
    edges = np.linspace(0, 100, 11)
    out = shot_split_metrics(np.arange(10.0), np.arange(10.0) * 9, np.full(10, 500), edges)
    assert "medium" not in out and "few" not in out and out["many"].n == 10


def test_shot_alignment_check():
    with pytest.raises(ContractError):
        shot_split_metrics([1.0, 2.0], [1.0, 2.0], [1, 2, 3], [0.0, 1.0])


@pytest.mark.parametrize("seed", range(5))
def test_shot_recombination(seed):
    rng = np.random.default_rng(seed)
    edges = np.linspace(0, 100, 101)
    hist = rng.integers(0, 200, size=100)
    y = rng.uniform(0, 100, 300)
    yhat = y + rng.normal(size=300)
    full = compute_metrics(yhat, y)
    parts = shot_split_metrics(yhat, y, hist, edges)
    subs = [parts[k] for k in ("many", "medium", "few") if k in parts]
    assert sum(s.n for s in subs) == 300
    assert sum(s.n * s.mae for s in subs) / 300 == pytest.approx(full.mae, abs=1e-12)
    assert sum(s.n * s.mse for s in subs) / 300 == pytest.approx(full.mse, abs=1e-12)


def test_ideal_semicircle_geometry():
    y = np.linspace(0, 100, 60)
    a = ideal_angle(0.0, y, R)
    z = np.stack([np.cos(a), np.sin(a)], axis=1)
    rep = geometry_report(z, y, R)
    assert rep.pearson <= -0.99
    assert rep.n_pairs == 60 * 59 // 2
    assert rep.bins[0]["bin_lo"] == 0.0 and rep.bins[-1]["bin_hi"] == 1.0
    assert rep.bins[0]["mean_cos"] > rep.bins[-1]["mean_cos"]


def test_random_embeddings_uncorrelated():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(200, 8))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    assert abs(geometry_report(z, rng.uniform(0, 100, 200), R).pearson) <= 0.2


def test_two_samples_and_degenerate_labels():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    rep = geometry_report(z, np.array([0.0, 50.0]), R, n_bins=4)
    assert rep.n_pairs == 1
    assert rep.bins[2]["n_pairs"] == 1 and rep.bins[2]["std_cos"] is None
    assert rep.bins[0]["mean_cos"] is None
    with pytest.raises(DomainError):
        geometry_report(z, np.array([7.0, 7.0]), R)


def test_rotation_invariance():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(40, 5))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    y = rng.uniform(0, 100, 40)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    a, b = geometry_report(z, y, R), geometry_report(z @ q, y, R)
    assert a.pearson == pytest.approx(b.pearson, abs=1e-9)
    for ba, bb in zip(a.bins, b.bins):
        if ba["mean_cos"] is not None:
            assert ba["mean_cos"] == pytest.approx(bb["mean_cos"], abs=1e-9)


def test_subsampling_cap_is_seeded():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(300, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    y = rng.uniform(0, 100, 300)
    a = geometry_report(z, y, R, seed=1, cap=100)
    b = geometry_report(z, y, R, seed=1, cap=100)
    assert a.n_samples == 100 and a.pearson == b.pearson


def test_curve_csv(tmp_path):
    y = np.linspace(0, 100, 10)
    z = np.stack([np.cos(y / 50), np.sin(y / 50)], axis=1)
    path = tmp_path / "c.csv"
    geometry_report(z, y, R, n_bins=5).write_curve_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,mean_cos,std_cos,n_pairs" and len(lines) == 6
