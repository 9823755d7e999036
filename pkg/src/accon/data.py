"""Synthetic regression data, natural/balanced splits and two-view augmentation.

Features come from a fixed smooth map of the label: random Fourier
components ``sin(w_k * y + b_k)`` mixed linearly into ``input_dim`` features,
plus isotropic Gaussian noise.  The map is fixed by ``manifold_seed``; the
label draw and noise by ``seed``.
"""

import csv
import math
from dataclasses import dataclass
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, model_validator

from .errors import InfeasibleSplitError
from .geometry import LabelRange

N_FREQUENCIES = 16
FREQUENCY_SCALE = 2.0


class UniformLabels(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    kind: Literal["uniform"] = "uniform"


class ExponentialLabels(BaseModel):
    """Density proportional to ``exp(-rate * (y - y_min) / width)`` on the range."""

    model_config = ConfigDict(extra="forbid", frozen=True)
    kind: Literal["exponential"] = "exponential"
    rate: float = Field(4.0, gt=0.0)


class MixtureComponent(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    weight: float = Field(gt=0.0)
    mean: float
    std: float = Field(gt=0.0)


class MixtureLabels(BaseModel):
    """Gaussian mixture truncated to the label range."""

    model_config = ConfigDict(extra="forbid", frozen=True)
    kind: Literal["mixture"] = "mixture"
    components: tuple[MixtureComponent, ...]


LabelDist = Annotated[Union[UniformLabels, ExponentialLabels, MixtureLabels], Field(discriminator="kind")]


class DatasetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_samples: int = Field(4000, ge=2)
    input_dim: int = Field(16, ge=1)
    label_range: LabelRange = LabelRange()
    label_dist: LabelDist = ExponentialLabels()
    label_step: float | None = Field(None, gt=0.0)
    manifold_seed: int = 0
    seed: int | None = None
    noise_sigma: NonNegativeFloat = 0.1
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_mode: Literal["natural", "dir"] = "natural"
    dir_bins: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _fractions(self):
        if any(f < 0 for f in self.split) or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {self.split}")
        return self


class AugmentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma: NonNegativeFloat = 0.1
    dropout_p: float = Field(0.1, ge=0.0, lt=1.0)
    seed: int | None = None


@dataclass
class LabeledDataset:
    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    label_range: LabelRange

    def __len__(self):
        return len(self.y)

    @property
    def input_dim(self):
        return self.x.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.ids[idx], self.x[idx], self.y[idx], self.label_range)

    def histogram(self, n_bins):
        edges = np.linspace(self.label_range.y_min, self.label_range.y_max, n_bins + 1)
        return np.histogram(self.y, bins=edges)[0]

    def to_csv(self, path):
        header = ["id", "y"] + [f"x{k}" for k in range(self.input_dim)]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, y, row in zip(self.ids, self.y, self.x):
                w.writerow([int(i), _fmt(y)] + [_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path, label_range):
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[:2] != ["id", "y"] or any(h != f"x{k}" for k, h in enumerate(header[2:])):
            raise ValueError(f"{path}: unexpected header {header[:4]}...")
        d = len(header) - 2
        if not body:
            return cls(np.zeros(0, np.int64), np.zeros((0, d)), np.zeros(0), label_range)
        arr = np.array(body, dtype=object)
        return cls(
            arr[:, 0].astype(np.int64),
            arr[:, 2:].astype(np.float64),
            arr[:, 1].astype(np.float64),
            label_range,
        )


def _fmt(v):
    return format(float(v), ".17g")


def sample_labels(dist, label_range, n, rng):
    lo, width = label_range.y_min, label_range.width
    if dist.kind == "uniform":
        return lo + width * rng.random(n)
    if dist.kind == "exponential":
        u = rng.random(n)
        t = -np.log1p(-u * (1.0 - math.exp(-dist.rate))) / dist.rate
        return np.clip(lo + width * t, lo, label_range.y_max)
    weights = np.array([c.weight for c in dist.components])
    weights = weights / weights.sum()
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        comp = rng.choice(len(weights), size=todo.size, p=weights)
        mu = np.array([dist.components[k].mean for k in comp])
        sd = np.array([dist.components[k].std for k in comp])
        draw = rng.normal(mu, sd)
        ok = (draw >= lo) & (draw <= label_range.y_max)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return out


class LabelManifold:
    """Fixed smooth map from labels to feature vectors."""

    def __init__(self, input_dim, label_range, seed):
        rng = np.random.default_rng(seed)
        scale = 2.0 * math.pi / label_range.width * FREQUENCY_SCALE
        self.omega = rng.normal(0.0, scale, size=N_FREQUENCIES)
        self.phase = rng.uniform(0.0, 2.0 * math.pi, size=N_FREQUENCIES)
        self.mix = rng.normal(0.0, 1.0, size=(N_FREQUENCIES, input_dim)) / math.sqrt(N_FREQUENCIES)

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.sin(np.outer(y, self.omega) + self.phase) @ self.mix


def generate(spec):
    """Draw a dataset; a pure function of ``spec`` (``seed`` None means 0)."""
    rng = np.random.default_rng(0 if spec.seed is None else spec.seed)
    y = sample_labels(spec.label_dist, spec.label_range, spec.n_samples, rng)
    if spec.label_step is not None:
        lo = spec.label_range.y_min
        y = np.clip(lo + np.round((y - lo) / spec.label_step) * spec.label_step, lo, spec.label_range.y_max)
    manifold = LabelManifold(spec.input_dim, spec.label_range, spec.manifold_seed)
    x = manifold(y) + spec.noise_sigma * rng.normal(size=(spec.n_samples, spec.input_dim))
    return LabeledDataset(np.arange(spec.n_samples), x, y, spec.label_range)


def _split_sizes(n, fractions):
    n_val = int(round(n * fractions[1]))
    n_test = int(round(n * fractions[2]))
    return n - n_val - n_test, n_val, n_test


def _spread(total, n_bins):
    base, extra = divmod(total, n_bins)
    return np.array([base + (1 if b < extra else 0) for b in range(n_bins)])


def split(ds, spec, rng=None):
    """Partition into (train, val, test).

    ``natural`` is a uniformly random partition.  ``dir`` draws validation
    and test sets with equal per-bin counts over ``dir_bins`` label bins
    (differing by at most one) and trains on the remainder.
    """
    if rng is None:
        rng = np.random.default_rng(0 if spec.seed is None else spec.seed + 1)
    n = len(ds)
    n_train, n_val, n_test = _split_sizes(n, spec.split)
    if spec.split_mode == "natural":
        perm = rng.permutation(n)
        parts = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    else:
        edges = np.linspace(spec.label_range.y_min, spec.label_range.y_max, spec.dir_bins + 1)
        bins = np.clip(np.searchsorted(edges, ds.y, side="right") - 1, 0, spec.dir_bins - 1)
        per_val = _spread(n_val, spec.dir_bins)
        per_test = _spread(n_test, spec.dir_bins)
        val_idx, test_idx = [], []
        for b in range(spec.dir_bins):
            members = np.flatnonzero(bins == b)
            need = per_val[b] + per_test[b]
            if members.size < need or members.size == 0:
                raise InfeasibleSplitError(b, int(members.size), int(max(need, 1)))
            members = rng.permutation(members)
            val_idx.append(members[:per_val[b]])
            test_idx.append(members[per_val[b]:need])
        val_idx = np.sort(np.concatenate(val_idx))
        test_idx = np.sort(np.concatenate(test_idx))
        held = np.zeros(n, dtype=bool)
        held[val_idx] = True
        held[test_idx] = True
        parts = np.flatnonzero(~held), val_idx, test_idx
    return tuple(ds.subset(np.sort(p)) for p in parts)


def augment_two_views(x, spec, rng=None):
    """Stack two independently augmented copies: rows ``[view1; view2]``.

    Each view adds ``N(0, sigma^2)`` noise and zeroes each feature with
    probability ``dropout_p``.  Callers duplicate labels the same way.
    """
    if rng is None:
        rng = np.random.default_rng(0 if spec.seed is None else spec.seed)
    x = np.asarray(x, dtype=np.float64)
    views = []
    for _ in range(2):
        v = x + spec.sigma * rng.normal(size=x.shape) if spec.sigma > 0 else x.copy()
        if spec.dropout_p > 0:
            v = v * (rng.random(x.shape) >= spec.dropout_p)
        views.append(v)
    return np.concatenate(views, axis=0)
