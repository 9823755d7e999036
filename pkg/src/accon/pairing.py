"""Label binning and per-anchor positive/negative index sets."""

import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, model_validator

from .geometry import LabelRange


class BinConfig(BaseModel):
    """Equal-width bins over the label range.

    Give either ``count`` (number of bins) or ``width`` (label units).  Bins
    are half-open ``[lo, hi)`` except the last, which also holds ``y_max``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    count: PositiveInt | None = None
    width: PositiveFloat | None = 1.0
    range: LabelRange = LabelRange()

    @model_validator(mode="after")
    def _one_mode(self):
        if self.count is not None and self.width is not None and "width" in self.model_fields_set:
            raise ValueError("give either bin count or bin width, not both")
        if self.count is None and self.width is None:
            raise ValueError("bin count or bin width is required")
        return self

    @property
    def n_bins(self):
        if self.count is not None:
            return self.count
        return max(1, math.ceil(self.range.width / self.width - 1e-9))

    @property
    def bin_width(self):
        if self.count is not None:
            return self.range.width / self.count
        return self.width

    def edges(self):
        m = self.n_bins
        edges = self.range.y_min + self.bin_width * np.arange(m + 1)
        edges[-1] = self.range.y_max
        return edges


def bin_index(y, cfg):
    """Bin of each label; ``y_max`` lands in the last bin."""
    cfg.range.check(y)
    y = np.asarray(y, dtype=np.float64)
    idx = np.floor((y - cfg.range.y_min) / cfg.bin_width).astype(np.int64)
    idx = np.minimum(idx, cfg.n_bins - 1)
    return int(idx) if idx.ndim == 0 else idx


@dataclass(frozen=True)
class PairSets:
    """Boolean masks over a batch: ``positive[i, j]`` means j is in P(i)."""

    positive: np.ndarray
    negative: np.ndarray

    @property
    def batch_size_2n(self):
        return self.positive.shape[0]

    def positives(self, i):
        return np.flatnonzero(self.positive[i]).tolist()

    def negatives(self, i):
        return np.flatnonzero(self.negative[i]).tolist()

    @property
    def n_positives(self):
        return self.positive.sum(axis=1)


def build_pair_sets(labels, cfg):
    labels = np.asarray(labels, dtype=np.float64)
    bins = np.atleast_1d(bin_index(labels, cfg))
    same = bins[:, None] == bins[None, :]
    positive = same.copy()
    np.fill_diagonal(positive, False)
    return PairSets(positive=positive, negative=~same)
