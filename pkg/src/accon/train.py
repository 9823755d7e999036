"""Training loops: joint objective, two-stage ablation, free-embedding geometry."""

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat

from . import autodiff as ad
from .data import augment_two_views
from .errors import NonFiniteLossError
from .geometry import ideal_angle
from .losses import LossConfig, accon_batch_loss, regression_loss
from .metrics import compute_metrics
from .model import forward, predict
from .pairing import build_pair_sets
from .seeding import substream


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(64, ge=1)
    lr0: PositiveFloat = 2.5e-4
    lr_after: PositiveFloat = 1e-4
    lr_decay_epoch: int = Field(60, ge=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps_adam: PositiveFloat = 1e-8
    mode: Literal["joint", "two_stage", "free_embedding"] = "joint"
    stage1_epochs: int | None = Field(None, ge=0)
    freeze_stage2: bool = True

    def lr_at(self, epoch):
        """Learning rate for 1-based ``epoch``: ``lr0`` through ``lr_decay_epoch``, then ``lr_after``."""
        return self.lr0 if epoch <= self.lr_decay_epoch else self.lr_after


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(values, grads, state, lr):
    """One bias-corrected Adam update; returns new arrays and advances ``state``."""
    if not state.m:
        state.m = [np.zeros_like(v) for v in values]
        state.v = [np.zeros_like(v) for v in values]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = []
    for k, (p, g) in enumerate(zip(values, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter {k}: shape {p.shape} but gradient {g.shape}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


def _adam_update(tensors, state, lr):
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]
    for t, new in zip(tensors, adam_step([t.data for t in tensors], grads, state, lr)):
        t.data = new


# ---------------------------------------------------------------------------
# epoch loop


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    lr: float
    loss_total: float
    loss_reg: float
    loss_accon: float | None
    reg_weight: float
    accon_weight: float
    val_mae: float | None = None
    val_mse: float | None = None
    val_gm: float | None = None
    val_r2: float | None = None
    grad_norms: dict = field(default_factory=dict)
    degenerate_rows: int = 0
    wall_ms: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    params: object
    best_params: object
    best_epoch: int
    records: list


GROUPS = ("enc", "proj", "pred")


def _grad_norms(params):
    norms = {}
    for g in GROUPS:
        ts = params.group(g)
        if ts:
            norms[g] = math.sqrt(sum(float((t.grad * t.grad).sum()) for t in ts if t.grad is not None))
    return norms


class _Trainer:
    """Shared state for one training run: parameters, RNG streams, data."""

    def __init__(self, params, model_cfg, train_ds, val_ds, train_cfg, loss_cfg, aug_spec, seed):
        self.params = params.copy()
        self.model_cfg = model_cfg
        self.train_ds = train_ds
        self.val_ds = val_ds
        self.cfg = train_cfg
        self.loss_cfg = loss_cfg
        self.aug = aug_spec
        self.batch_rng = substream(seed, "batch")
        self.aug_rng = substream(seed, "augment")
        self.label_range = train_ds.label_range

    def run(self, n_epochs, stage, trainable, reg_weight, accon_weight, select_best, callback=None):
        names = set(trainable)
        for n, t in self.params.tensors.items():
            t.requires_grad = n in names
        tensors = [self.params[n] for n in self.params.names() if n in names]
        state = AdamState(self.cfg.beta1, self.cfg.beta2, self.cfg.eps_adam)
        records, best, best_epoch, best_mae = [], None, 0, math.inf
        for epoch in range(1, n_epochs + 1):
            rec = self._epoch(epoch, stage, tensors, state, reg_weight, accon_weight)
            if self.val_ds is not None and len(self.val_ds) >= 2:
                yhat, _ = predict(self.params, self.val_ds.x, self.model_cfg)
                m = compute_metrics(yhat, self.val_ds.y)
                rec.val_mae, rec.val_mse, rec.val_gm, rec.val_r2 = m.mae, m.mse, m.gm, m.r2
                if select_best and m.mae < best_mae:
                    best_mae, best, best_epoch = m.mae, self.params.copy(), epoch
            records.append(rec)
            if callback is not None:
                callback(rec)
        for t in self.params.parameters():
            t.requires_grad = True
            t.grad = None
        return records, best, best_epoch

    def _epoch(self, epoch, stage, tensors, state, reg_weight, accon_weight):
        start = time.perf_counter()
        lr = self.cfg.lr_at(epoch)
        n = len(self.train_ds)
        order = self.batch_rng.permutation(n)
        want_accon = accon_weight > 0 or stage == "stage2"
        sums = {"total": 0.0, "reg": 0.0, "accon": 0.0}
        norms_acc, degenerate, n_batches = {}, 0, 0
        for b, lo in enumerate(range(0, n, self.cfg.batch_size)):
            idx = order[lo:lo + self.cfg.batch_size]
            xb = augment_two_views(self.train_ds.x[idx], self.aug, self.aug_rng)
            yb = np.concatenate([self.train_ds.y[idx], self.train_ds.y[idx]])
            out = forward(self.params, xb, self.model_cfg)
            degenerate += out.degenerate_rows
            reg = regression_loss(out.prediction, yb, self.loss_cfg.reg_kind)
            total = ad.scale(reg, reg_weight)
            accon_val = 0.0
            if want_accon:
                pairs = build_pair_sets(yb, self.loss_cfg.bin)
                accon = accon_batch_loss(out.contrast, yb, pairs, self.loss_cfg, self.label_range)
                accon_val = accon.item()
                if accon_weight > 0:
                    total = total + ad.scale(accon, accon_weight)
            reg_val, total_val = reg.item(), total.item()
            if not all(math.isfinite(v) for v in (reg_val, accon_val, total_val)):
                raise NonFiniteLossError(epoch, b, {"total": total_val, "reg": reg_val, "accon": accon_val})
            ad.zero_grad(self.params.parameters())
            ad.backward(total)
            for k, v in _grad_norms(self.params).items():
                norms_acc[k] = norms_acc.get(k, 0.0) + v
            _adam_update(tensors, state, lr)
            sums["total"] += total_val
            sums["reg"] += reg_val
            sums["accon"] += accon_val
            n_batches += 1
        mean = {k: v / n_batches for k, v in sums.items()}
        return EpochRecord(
            epoch=epoch,
            stage=stage,
            lr=lr,
            loss_total=mean["total"],
            loss_reg=mean["reg"],
            loss_accon=mean["accon"] if want_accon else None,
            reg_weight=reg_weight,
            accon_weight=accon_weight,
            grad_norms={k: v / n_batches for k, v in norms_acc.items()},
            degenerate_rows=degenerate,
            wall_ms=(time.perf_counter() - start) * 1000.0,
        )


def fit(params, model_cfg, train_ds, val_ds, train_cfg, loss_cfg, aug_spec, seed=0, callback=None):
    """Joint training on ``reg + gamma * accon``; never mutates ``params`` or the data.

    Returns final parameters, the lowest-validation-MAE parameters and the
    per-epoch records.  With ``gamma == 0`` the contrastive term is skipped
    entirely and its record field is ``None``.
    """
    tr = _Trainer(params, model_cfg, train_ds, val_ds, train_cfg, loss_cfg, aug_spec, seed)
    records, best, best_epoch = tr.run(
        train_cfg.epochs, "joint", tr.params.names(), 1.0, loss_cfg.gamma, True, callback
    )
    return FitResult(tr.params, best if best is not None else tr.params.copy(), best_epoch, records)


def fit_two_stage(params, model_cfg, train_ds, val_ds, train_cfg, loss_cfg, aug_spec, seed=0, callback=None):
    """Contrastive pre-training, then predictor fitting.

    Stage 1 runs ``stage1_epochs`` (default ``epochs``) on the contrastive
    loss alone.  Stage 2 runs ``epochs`` on the joint objective; with
    ``freeze_stage2`` only the predictor is trainable, so the contrastive term
    carries no gradient and the stage reduces to regression fitting.
    """
    tr = _Trainer(params, model_cfg, train_ds, val_ds, train_cfg, loss_cfg, aug_spec, seed)
    n1 = train_cfg.epochs if train_cfg.stage1_epochs is None else train_cfg.stage1_epochs
    body = [n for n in tr.params.names() if not n.startswith("pred")]
    rec1, _, _ = tr.run(n1, "stage1", body, 0.0, 1.0, False, callback)
    trainable = ["pred.w"] if train_cfg.freeze_stage2 else tr.params.names()
    stage2 = "stage2" if train_cfg.freeze_stage2 else "joint"
    rec2, best, best_epoch = tr.run(
        train_cfg.epochs, stage2, trainable, 1.0, loss_cfg.gamma, True, callback
    )
    return FitResult(tr.params, best if best is not None else tr.params.copy(), best_epoch, rec1 + rec2)


# ---------------------------------------------------------------------------
# free embeddings


@dataclass
class FreeEmbeddingResult:
    embeddings: np.ndarray
    labels: np.ndarray
    losses: list
    alignment: list


def angle_alignment_error(z, labels, pairs, label_range):
    """Mean over negative pairs of ``|acos(z_i . z_m) - |ideal angle||``."""
    z = np.asarray(z, dtype=np.float64)
    c = np.clip(z @ z.T, -1.0, 1.0)
    y = np.asarray(labels, dtype=np.float64)
    target = np.abs(ideal_angle(y[:, None], y[None, :], label_range))
    err = np.abs(np.arccos(c) - target)[pairs.negative]
    return float(err.mean()) if err.size else 0.0


def fit_free_embeddings(labels, dim, train_cfg, loss_cfg, label_range, seed=0, steps=None):
    """Optimise free unit vectors for two views of ``labels`` on the contrastive loss.

    The ``len(labels)`` labels are duplicated into ``2N`` rows, vectors start
    Gaussian, and after every Adam step (at ``lr0``) each row is re-normalised.
    ``steps`` defaults to ``train_cfg.epochs``; one record per step.
    """
    y = np.asarray(labels, dtype=np.float64)
    label_range.check(y)
    y2 = np.concatenate([y, y])
    pairs = build_pair_sets(y2, loss_cfg.bin)
    rng = substream(seed, "free")
    v = ad.Tensor(rng.normal(size=(len(y2), dim)), requires_grad=True)
    v.data = ad.rowwise_l2_normalize(ad.Tensor(v.data)).data
    state = AdamState(train_cfg.beta1, train_cfg.beta2, train_cfg.eps_adam)
    n_steps = train_cfg.epochs if steps is None else steps
    losses, alignment = [], []
    for step in range(1, n_steps + 1):
        loss = accon_batch_loss(ad.rowwise_l2_normalize(v), y2, pairs, loss_cfg, label_range)
        val = loss.item()
        if not math.isfinite(val):
            raise NonFiniteLossError(step, 0, {"accon": val})
        v.grad = None
        ad.backward(loss)
        _adam_update([v], state, train_cfg.lr_at(step))
        v.data = ad.rowwise_l2_normalize(ad.Tensor(v.data)).data
        losses.append(val)
        alignment.append(angle_alignment_error(v.data, y2, pairs, label_range))
    return FreeEmbeddingResult(v.data.copy(), y2, losses, alignment)
