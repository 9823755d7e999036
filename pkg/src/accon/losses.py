"""Contrastive and regression objectives, plus lower-bound diagnostics.

All contrastive losses take L2-normalised embeddings ``zt`` (one row per
view, ``2N`` rows), the raw labels of those rows, and the pair masks built
from label bins.  Compensation angles always use raw labels; bins only
decide who is a positive.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .geometry import DEFAULT_EPS, LabelRange, compensation_angle, compensated_cosine_tensor
from .pairing import BinConfig

UNIT_TOL = 1e-6


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tau: PositiveFloat = 0.05
    gamma: float = Field(1.0, ge=0.0)
    eps: float = Field(DEFAULT_EPS, ge=0.0)
    reg_kind: Literal["mae", "mse"] = "mae"
    bin: BinConfig = BinConfig()
    # Study toggle: also put the anchor's self-similarity in the softmax denominator.
    include_anchor_in_denominator: bool = False

    @field_validator("reg_kind", mode="before")
    @classmethod
    def _lower(cls, v):
        return v.lower() if isinstance(v, str) else v


def _check_unit_rows(zt):
    norms = np.sqrt((zt.data * zt.data).sum(axis=1))
    off = np.abs(norms - 1.0) > UNIT_TOL
    # rows the normalizer floored are short by construction; accept that many
    short = off & (norms < 1.0)
    if 0 < short.sum() <= getattr(zt, "degenerate_rows", 0):
        off = off & ~short
    if off.any():
        i = int(np.argmax(off))
        raise ContractError(f"embedding row {i} has norm {norms[i]!r}, expected unit rows")


def _denominator_mask(pairs, include_anchor):
    mask = pairs.positive | pairs.negative
    if include_anchor:
        mask = mask.copy()
        np.fill_diagonal(mask, True)
    return mask


def _per_anchor(logits, pairs, include_anchor=False):
    """``LSE(denominator) - mean_p logit_ip`` per anchor, 0 where P(i) is empty."""
    n_pos = pairs.n_positives
    has_pos = n_pos > 0
    pos_weight = pairs.positive / np.maximum(n_pos, 1)[:, None]
    pos_term = ad.tsum(logits * pos_weight, axis=1)
    lse = ad.logsumexp_rows(logits, _denominator_mask(pairs, include_anchor))
    return ad.where(has_pos, lse - pos_term, 0.0)


def cosine_matrix(zt):
    zt = ad.as_tensor(zt)
    return ad.matmul(zt, ad.transpose(zt))


def compensation_matrix(labels, label_range):
    """``phi[i, m]`` for anchor ``i`` against sample ``m``."""
    y = np.asarray(labels, dtype=np.float64)
    return compensation_angle(y[:, None], y[None, :], label_range)


def compensated_logits(zt, labels, pairs, cfg, label_range):
    """Similarity logits with negatives replaced by their compensated cosine."""
    s = cosine_matrix(zt)
    phi = compensation_matrix(labels, label_range)
    c = compensated_cosine_tensor(s, phi, cfg.eps, mask=pairs.negative)
    return ad.scale(c, 1.0 / cfg.tau)


def naive_supcon_loss(zt, pairs, tau, include_anchor=False):
    """Supervised contrastive loss with bins as classes, averaged over 2N anchors."""
    zt = ad.as_tensor(zt)
    _check_unit_rows(zt)
    logits = ad.scale(cosine_matrix(zt), 1.0 / tau)
    per = _per_anchor(logits, pairs, include_anchor)
    return ad.scale(ad.tsum(per), 1.0 / zt.shape[0])


def accon_anchor_losses(zt, labels, pairs, cfg, label_range):
    """Vector of per-anchor angle-compensated losses (0 for anchors without positives)."""
    zt = ad.as_tensor(zt)
    _check_unit_rows(zt)
    if len(labels) != zt.shape[0]:
        raise DimensionError(f"{len(labels)} labels for {zt.shape[0]} embeddings")
    logits = compensated_logits(zt, labels, pairs, cfg, label_range)
    return _per_anchor(logits, pairs, cfg.include_anchor_in_denominator)


def accon_anchor_loss(i, zt, labels, pairs, cfg, label_range):
    """Loss of a single anchor, or ``None`` when it has no positives."""
    if not pairs.positive[i].any():
        return None
    per = accon_anchor_losses(zt, labels, pairs, cfg, label_range)
    onehot = np.zeros(per.shape)
    onehot[i] = 1.0
    return ad.tsum(per * onehot)


def accon_batch_loss(zt, labels, pairs, cfg, label_range):
    per = accon_anchor_losses(zt, labels, pairs, cfg, label_range)
    return ad.scale(ad.tsum(per), 1.0 / per.shape[0])


def regression_loss(yhat, y, kind="mae"):
    yhat, y = ad.as_tensor(yhat), ad.as_tensor(y)
    if yhat.shape != y.shape:
        raise DimensionError(f"prediction shape {yhat.shape} != target shape {y.shape}")
    err = yhat - y
    if kind == "mae":
        return ad.mean(ad.tabs(err))
    if kind == "mse":
        return ad.mean(ad.square(err))
    raise ValueError(f"unknown regression loss {kind!r}")


def combined_loss(reg, accon, gamma):
    return ad.add(reg, ad.scale(accon, gamma))


# ---------------------------------------------------------------------------
# lower-bound diagnostics (plain numpy, never differentiated)


def _compensated_numpy(zt, labels, pairs, cfg, label_range):
    zt = np.asarray(getattr(zt, "data", zt), dtype=np.float64)
    s = zt @ zt.T
    with np.errstate(invalid="ignore"):
        c = compensated_cosine_tensor(
            ad.Tensor(s), compensation_matrix(labels, label_range), cfg.eps, mask=pairs.negative
        ).data
    return s, c


def lower_bound(zt, labels, pairs, cfg, label_range, variant="stated"):
    """Closed-form lower bound on the batch loss.

    ``stated`` uses ``log(N/tau)``, ``derived`` uses ``log(2N/tau)`` where
    ``2N`` is the number of rows.
    """
    _, c = _compensated_numpy(zt, labels, pairs, cfg, label_range)
    n2 = c.shape[0]
    first = float((c * pairs.negative).sum()) / cfg.tau / (n2 * n2)
    if variant == "stated":
        return first - math.log((n2 / 2) / cfg.tau) / n2
    if variant == "derived":
        return first - math.log(n2 / cfg.tau) / n2
    raise ValueError(f"unknown bound variant {variant!r}")


@dataclass
class BoundReport:
    l_accon: float
    l_star_stated: float
    l_star_derived: float
    intermediate_ok: bool
    stated_ok: bool
    derived_ok: bool
    per_anchor_margins: list = field(default_factory=list)

    @property
    def min_margin(self):
        finite = [m for m in self.per_anchor_margins if m is not None and not math.isnan(m)]
        return min(finite) if finite else math.inf

    def to_dict(self):
        def clean(m):
            return None if m is None or not math.isfinite(m) else m

        return {
            "l_accon": self.l_accon,
            "l_star_stated": self.l_star_stated,
            "l_star_derived": self.l_star_derived,
            "intermediate_ok": self.intermediate_ok,
            "stated_ok": self.stated_ok,
            "derived_ok": self.derived_ok,
            "min_margin": clean(self.min_margin),
            "per_anchor_margins": [clean(m) for m in self.per_anchor_margins],
        }


def _masked_lse(x, mask):
    xm = np.where(mask, x, -np.inf)
    mx = xm.max(axis=1)
    shift = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return shift + np.log(np.exp(xm - shift[:, None]).sum(axis=1))


def bound_diagnostics(zt, labels, pairs, cfg, label_range, tol=1e-9):
    """Check the per-anchor inequality and both closed-form bounds.

    Per anchor with positives, the margin is
    ``L_i - (LSE_N(cos~/tau) - LSE_P(cos/tau)) / |P(i)|``; an empty negative
    set makes the subtracted term ``-inf`` and the margin ``+inf``.  Anchors
    without positives get ``nan``.
    """
    per = accon_anchor_losses(ad.Tensor(getattr(zt, "data", zt)), labels, pairs, cfg, label_range).data
    s, c = _compensated_numpy(zt, labels, pairs, cfg, label_range)
    n_pos = pairs.n_positives
    with np.errstate(invalid="ignore"):
        bracket = _masked_lse(c / cfg.tau, pairs.negative) - _masked_lse(s / cfg.tau, pairs.positive)
        margins = np.where(n_pos > 0, per - bracket / np.maximum(n_pos, 1), np.nan)
    l_accon = float(per.sum() / per.shape[0])
    stated = lower_bound(zt, labels, pairs, cfg, label_range, "stated")
    derived = lower_bound(zt, labels, pairs, cfg, label_range, "derived")
    checked = margins[~np.isnan(margins)]
    return BoundReport(
        l_accon=l_accon,
        l_star_stated=stated,
        l_star_derived=derived,
        intermediate_ok=bool((checked >= -tol).all()),
        stated_ok=l_accon >= stated,
        derived_ok=l_accon >= derived,
        per_anchor_margins=[float(m) for m in margins],
    )
