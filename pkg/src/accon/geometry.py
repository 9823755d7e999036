"""Angle arithmetic behind the compensated similarity.

Labels map to target angles proportional to their distance over the label
range.  The compensation angle is the complement of that target to pi, so a
loss that drives compensated anchor/negative angles to pi leaves the raw
angle at the label-proportional target.
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from . import autodiff as ad
from .errors import DomainError

DEFAULT_EPS = 1e-6
COSINE_CLAMP_TOL = 1e-9


class LabelRange(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    y_min: float = 0.0
    y_max: float = 100.0

    @model_validator(mode="after")
    def _ordered(self):
        if not self.y_max > self.y_min:
            raise ValueError(f"y_max ({self.y_max}) must exceed y_min ({self.y_min})")
        return self

    @property
    def width(self):
        return self.y_max - self.y_min

    def check(self, y):
        """Raise DomainError if any label lies outside the range."""
        arr = np.asarray(y, dtype=np.float64)
        bad = (arr < self.y_min) | (arr > self.y_max) | ~np.isfinite(arr)
        if bad.any():
            v = arr.reshape(-1)[np.argmax(bad.reshape(-1))]
            raise DomainError(f"label {v!r} outside range [{self.y_min}, {self.y_max}]")


def ideal_angle(y_anc, y_neg, label_range):
    """Target signed angle (radians) between an anchor and a negative."""
    label_range.check(y_anc)
    label_range.check(y_neg)
    return (np.asarray(y_neg, dtype=np.float64) - y_anc) / label_range.width * math.pi


def compensation_angle(y_anc, y_neg, label_range):
    """``pi`` minus the ideal angle; lies in ``[0, 2*pi]``."""
    label_range.check(y_anc)
    label_range.check(y_neg)
    return math.pi * (1.0 - (np.asarray(y_neg, dtype=np.float64) - y_anc) / label_range.width)


def clamp_cosine(c):
    """Clamp float-noise overshoot of a cosine; reject real violations."""
    arr = np.asarray(c, dtype=np.float64)
    over = np.abs(arr) > 1.0 + COSINE_CLAMP_TOL
    if over.any():
        v = arr.reshape(-1)[np.argmax(over.reshape(-1))]
        raise DomainError(f"cosine {v!r} outside [-1, 1] beyond tolerance {COSINE_CLAMP_TOL}")
    return np.clip(arr, -1.0, 1.0)


def compensated_cosine(c, phi, eps=DEFAULT_EPS):
    """``c*cos(phi) - |sin(phi)|*sqrt(1 - c**2 + eps)`` for scalars or arrays.

    With ``eps == 0`` and ``c == cos(t)``, ``t`` in ``[0, pi]``, this is
    ``cos(t + phi)``.  ``phi`` is used as given, without reduction mod 2*pi.
    """
    if eps < 0:
        raise DomainError(f"smoothing eps must be non-negative, got {eps}")
    c = clamp_cosine(c)
    phi = np.asarray(phi, dtype=np.float64)
    out = c * np.cos(phi) - np.abs(np.sin(phi)) * np.sqrt(1.0 - c * c + eps)
    return float(out) if out.ndim == 0 else out


def compensated_cosine_tensor(c, phi, eps=DEFAULT_EPS, mask=None):
    """Differentiable compensated cosine over a cosine matrix.

    ``c`` is a Tensor of cosines, ``phi`` a constant array of the same shape.
    Entries outside ``mask`` are returned as the plain cosine; their square
    root argument is replaced by 1 so no singular derivative is formed there.
    """
    if eps < 0:
        raise DomainError(f"smoothing eps must be non-negative, got {eps}")
    c = ad.as_tensor(c)
    clamp_cosine(c.data if mask is None else np.where(mask, c.data, 0.0))
    cc = ad.clip(c, -1.0, 1.0)
    phi = np.asarray(phi, dtype=np.float64)
    radicand = 1.0 - ad.square(cc) + eps
    if mask is not None:
        radicand = ad.where(mask, radicand, 1.0)
    comp = cc * np.cos(phi) - ad.sqrt(radicand) * np.abs(np.sin(phi))
    if mask is None:
        return comp
    return ad.where(mask, comp, c)
