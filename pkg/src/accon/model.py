"""Encoder, projection head and bias-free predictor, with ablation variants."""

import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import autodiff as ad
from .errors import ContractError

CHECKPOINT_FORMAT = "accon-params"
CHECKPOINT_VERSION = 1


class ModelConfig(BaseModel):
    """Network shape.

    ``head_mode``: ``standard`` contrasts the normalised projection,
    ``before_proj`` contrasts the normalised encoder output, ``no_proj``
    drops the projection layer entirely.  ``predictor_input`` selects
    whether the predictor reads the raw or the normalised projection.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_dim: int = Field(16, ge=1)
    encoder_layers: tuple[int, ...] = (64, 64)
    activation: Literal["relu", "tanh", "identity"] = "relu"
    proj_dim: int = Field(16, ge=2)
    head_mode: Literal["standard", "before_proj", "no_proj"] = "standard"
    predictor_input: Literal["unnormalized", "normalized"] = "unnormalized"
    projection_bias: bool = True

    @field_validator("encoder_layers")
    @classmethod
    def _widths(cls, v):
        if not v or any(w < 1 for w in v):
            raise ValueError("encoder_layers must be a non-empty list of widths >= 1")
        return tuple(v)

    @property
    def embed_dim(self):
        return self.encoder_layers[-1]


class ModelParams:
    """Named parameter tensors in a fixed order.

    Names: ``enc{k}.w``/``enc{k}.b`` per encoder layer, ``proj.w``/``proj.b``
    (absent in ``no_proj`` mode), and ``pred.w``.  Weights are stored
    ``(fan_in, fan_out)`` so a layer is ``x @ w + b``.
    """

    def __init__(self, tensors):
        self.tensors = dict(tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def parameters(self):
        return list(self.tensors.values())

    def group(self, prefix):
        return [t for n, t in self.tensors.items() if n.startswith(prefix)]

    def copy(self):
        return ModelParams({n: ad.Tensor(t.data, requires_grad=t.requires_grad) for n, t in self.tensors.items()})

    def state(self):
        return {n: t.data.copy() for n, t in self.tensors.items()}

    def load_state(self, state):
        for n, arr in state.items():
            self.tensors[n].data = np.array(arr, dtype=np.float64)

    def equal(self, other):
        return self.names() == other.names() and all(
            np.array_equal(self[n].data, other[n].data) for n in self.names()
        )


def init_bound(fan_in):
    return math.sqrt(6.0 / fan_in)


def _layer(rng, fan_in, fan_out, bias=True):
    b = init_bound(fan_in)
    w = ad.Tensor(rng.uniform(-b, b, size=(fan_in, fan_out)), requires_grad=True)
    return w, (ad.Tensor(np.zeros(fan_out), requires_grad=True) if bias else None)


def init_params(cfg, rng):
    """Fan-in scaled uniform weights, zero biases.  ``rng`` may be an int seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tensors = {}
    width = cfg.input_dim
    for k, out in enumerate(cfg.encoder_layers):
        tensors[f"enc{k}.w"], tensors[f"enc{k}.b"] = _layer(rng, width, out)
        width = out
    if cfg.head_mode != "no_proj":
        w, b = _layer(rng, width, cfg.proj_dim, bias=cfg.projection_bias)
        tensors["proj.w"] = w
        if b is not None:
            tensors["proj.b"] = b
        width = cfg.proj_dim
    tensors["pred.w"], _ = _layer(rng, width, 1, bias=False)
    return ModelParams(tensors)


@dataclass
class ForwardOutput:
    embedding: ad.Tensor       # encoder output E
    projection: ad.Tensor      # Z
    contrast: ad.Tensor        # unit rows fed to the contrastive loss
    prediction: ad.Tensor      # shape (n,)

    @property
    def degenerate_rows(self):
        return self.contrast.degenerate_rows


def _activate(x, kind):
    if kind == "identity":
        return x
    return ad.relu(x) if kind == "relu" else ad.tanh(x)


def forward(params, x, cfg):
    x = ad.as_tensor(x)
    if not np.isfinite(x.data).all():
        raise ContractError("forward received non-finite inputs")
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ContractError(f"expected inputs of shape (n, {cfg.input_dim}), got {x.shape}")
    h = x
    for k in range(len(cfg.encoder_layers)):
        h = _activate(ad.matmul(h, params[f"enc{k}.w"]) + params[f"enc{k}.b"], cfg.activation)
    e = h
    if cfg.head_mode == "no_proj":
        z = e
    else:
        z = ad.matmul(e, params["proj.w"])
        if "proj.b" in params:
            z = z + params["proj.b"]
    z_unit = ad.rowwise_l2_normalize(z)
    contrast = ad.rowwise_l2_normalize(e) if cfg.head_mode == "before_proj" else z_unit
    pred_in = z_unit if cfg.predictor_input == "normalized" else z
    yhat = ad.reshape(ad.matmul(pred_in, params["pred.w"]), (x.shape[0],))
    return ForwardOutput(e, z, contrast, yhat)


def predict(params, x, cfg):
    """Predictions and contrastive embeddings as plain arrays (no graph)."""
    frozen = ModelParams({n: ad.Tensor(t.data, copy=False) for n, t in params.tensors.items()})
    out = forward(frozen, x, cfg)
    return out.prediction.data, out.contrast.data


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params, cfg, extra=None):
    """Write shapes and row-major values as JSON; floats round-trip exactly."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model": cfg.model_dump(mode="json"),
        "tensors": {
            n: {"shape": list(t.data.shape), "values": t.data.reshape(-1).tolist()}
            for n, t in params.tensors.items()
        },
    }
    if extra:
        record["extra"] = extra
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not an {CHECKPOINT_FORMAT} checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {record.get('version')}")
    cfg = ModelConfig(**record["model"])
    tensors = {}
    for n, t in record["tensors"].items():
        arr = np.array(t["values"], dtype=np.float64).reshape(t["shape"])
        tensors[n] = ad.Tensor(arr, requires_grad=True)
    return ModelParams(tensors), cfg
