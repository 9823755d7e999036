import math

import numpy as np
import pytest

from accon.data import (
    AugmentSpec,
    DatasetSpec,
    ExponentialLabels,
    LabeledDataset,
    MixtureLabels,
    UniformLabels,
    augment_two_views,
    generate,
    sample_labels,
    split,
)
from accon.errors import InfeasibleSplitError
from accon.geometry import LabelRange

R = LabelRange(y_min=0, y_max=100)


def within_3_sigma(counts, probs):
    n = counts.sum()
    sd = np.sqrt(n * probs * (1 - probs))
    return np.all(np.abs(counts - n * probs) <= 3 * sd + 1e-9)


def test_uniform_deciles():
    y = sample_labels(UniformLabels(), R, 10_000, np.random.default_rng(0))
    counts = np.histogram(y, bins=np.linspace(0, 100, 11))[0]
    assert within_3_sigma(counts, np.full(10, 0.1))


@pytest.mark.parametrize("rate", [1.0, 4.0])
def test_truncated_exponential_pmf(rate):
    y = sample_labels(ExponentialLabels(rate=rate), R, 20_000, np.random.default_rng(0))
    edges = np.linspace(0, 1, 11)
    pmf = (np.exp(-rate * edges[:-1]) - np.exp(-rate * edges[1:])) / (1 - math.exp(-rate))
    counts = np.histogram(y, bins=edges * 100)[0]
    assert within_3_sigma(counts, pmf)
    assert y.min() >= 0 and y.max() <= 100


def test_mixture_stays_in_range():
    dist = MixtureLabels(components=[{"weight": 1, "mean": 5, "std": 10}, {"weight": 2, "mean": 90, "std": 20}])
    y = sample_labels(dist, R, 3000, np.random.default_rng(2))
    assert y.min() >= 0 and y.max() <= 100
    assert abs((y > 50).mean() - 2 / 3) < 0.06


def test_generate_is_pure_and_noise_free_manifold():
    spec = DatasetSpec(n_samples=50, input_dim=4, noise_sigma=0.0, seed=3)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    spec = spec.model_copy(update={"label_step": 10.0})
    ds = generate(spec)
    for v in np.unique(ds.y):
        rows = ds.x[ds.y == v]
        assert np.all(rows == rows[0])


def test_manifold_seed_fixes_map_not_labels():
    a = generate(DatasetSpec(n_samples=20, seed=1, manifold_seed=0))
    b = generate(DatasetSpec(n_samples=20, seed=1, manifold_seed=5))
    assert np.array_equal(a.y, b.y) and not np.array_equal(a.x, b.x)


def test_natural_split_sizes():
    spec = DatasetSpec(n_samples=100, seed=0)
    tr, va, te = split(generate(spec), spec, np.random.default_rng(0))
    assert (len(tr), len(va), len(te)) == (80, 10, 10)
    ids = np.concatenate([tr.ids, va.ids, te.ids])
    assert sorted(ids.tolist()) == list(range(100))


def test_dir_split_balanced():
    spec = DatasetSpec(n_samples=4000, seed=0, split_mode="dir", label_dist=ExponentialLabels(rate=2.0))
    tr, va, te = split(generate(spec), spec, np.random.default_rng(0))
    for part in (va, te):
        h = part.histogram(spec.dir_bins)
        assert h.min() > 0 and h.max() / h.min() <= 2
    assert len(tr) + len(va) + len(te) == 4000
    assert not set(tr.ids) & set(va.ids) and not set(va.ids) & set(te.ids)


def test_dir_split_infeasible_names_bin():
    spec = DatasetSpec(n_samples=200, seed=0, split_mode="dir", label_dist=ExponentialLabels(rate=8.0))
    with pytest.raises(InfeasibleSplitError, match="bin 5 has 0 samples"):
        split(generate(spec), spec, np.random.default_rng(0))
    one_bin = DatasetSpec(n_samples=50, seed=0, split_mode="dir", dir_bins=1)
    split(generate(one_bin), one_bin, np.random.default_rng(0))  # a single bin holding everything is fine
    ds = generate(DatasetSpec(n_samples=30, seed=0, label_step=100.0, label_range=R))
    ds.y[:] = 5.0
    with pytest.raises(InfeasibleSplitError):
        split(ds, DatasetSpec(n_samples=30, split_mode="dir"), np.random.default_rng(0))


def test_split_fraction_validation():
    with pytest.raises(ValueError):
        DatasetSpec(split=(0.5, 0.2, 0.2))


def test_augment_identity_and_independence():
    x = np.random.default_rng(0).normal(size=(5, 3))
    out = augment_two_views(x, AugmentSpec(sigma=0.0, dropout_p=0.0), np.random.default_rng(0))
    assert np.array_equal(out, np.vstack([x, x]))
    out = augment_two_views(x, AugmentSpec(sigma=0.1, dropout_p=0.0), np.random.default_rng(0))
    assert out.shape == (10, 3) and np.all(out[:5] != out[5:])


def test_augment_dropout_rate():
    x = np.ones((1, 1000))
    out = augment_two_views(x, AugmentSpec(sigma=0.0, dropout_p=0.5), np.random.default_rng(1))
    zeros = (out == 0).sum()
    n = out.size
    assert abs(zeros - n / 2) <= 3 * math.sqrt(n / 4)


def test_csv_round_trip(tmp_path):
    ds = generate(DatasetSpec(n_samples=25, input_dim=3, seed=4))
    path = tmp_path / "d.csv"
    ds.to_csv(path)
    text = path.read_text()
    assert text.startswith("id,y,x0,x1,x2\n") and "\r" not in text
    back = LabeledDataset.from_csv(path, R)
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y) and np.array_equal(back.ids, ds.ids)
