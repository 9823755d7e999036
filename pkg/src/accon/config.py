"""Run configuration: one JSON document covering every stage of a run.

Unknown keys are rejected at every level so typos in sweep files fail
loudly.  ``--scale`` picks a profile of defaults that sits underneath the
file's own values.
"""

import copy
import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from .data import AugmentSpec, DatasetSpec
from .errors import AcconError
from .losses import LossConfig
from .model import ModelConfig
from .train import TrainConfig

CONFIG_VERSION = 1


class ConfigError(AcconError):
    """The run configuration could not be read or validated."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EvalConfig(_Section):
    many_min: int = Field(100, ge=0)
    few_max: int = Field(20, ge=0)
    shot_bin_width: PositiveFloat = 1.0
    gm_eps: float = Field(1e-8, ge=0.0)
    geometry_bins: int = Field(10, ge=1)


class GradcheckConfig(_Section):
    n_configs: int = Field(20, ge=1)
    h: PositiveFloat = 1e-5
    tol: PositiveFloat = 1e-4
    max_samples: int = Field(8, ge=4)
    max_input_dim: int = Field(6, ge=1)
    max_proj_dim: int = Field(4, ge=2)
    taus: tuple[float, ...] = (0.05, 1.0)
    eps: float = Field(1e-6, gt=0.0)
    smooth_margin: PositiveFloat = 1e-3


class BoundcheckConfig(_Section):
    n_batches: int = Field(1000, ge=1)
    max_samples: int = Field(8, ge=1)
    max_dim: int = Field(8, ge=2)
    taus: tuple[float, ...] = (0.05, 0.2, 1.0)
    single_label_fraction: float = Field(0.1, ge=0.0, le=1.0)
    hill_climb_batches: int = Field(20, ge=0)
    hill_climb_steps: int = Field(200, ge=0)


class SweepConfig(_Section):
    gammas: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    proj_dims: tuple[int, ...] = (64, 128, 256, 512, 1024)
    dim_divisor: int | None = None
    include_vanilla: bool = True

    def scaled_dims(self, divisor):
        d = self.dim_divisor if self.dim_divisor is not None else divisor
        return tuple(max(2, p // d) for p in self.proj_dims)


class FreeEmbeddingConfig(_Section):
    n_labels: int = Field(8, ge=2)
    dim: int = Field(3, ge=2)
    steps: int = Field(2000, ge=1)
    lr: PositiveFloat = 0.01
    tau: PositiveFloat | None = 1.0


class RunConfig(_Section):
    version: Literal[1] = CONFIG_VERSION
    seed: int = Field(0, ge=0, lt=2**64)
    scale: Literal["desk", "paper"] = "desk"
    out_dir: str | None = None
    data_dir: str | None = None
    compare_vanilla: bool = False
    data: DatasetSpec = DatasetSpec()
    augment: AugmentSpec = AugmentSpec()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    loss: LossConfig = LossConfig()
    eval: EvalConfig = EvalConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    boundcheck: BoundcheckConfig = BoundcheckConfig()
    sweep: SweepConfig = SweepConfig()
    free_embedding: FreeEmbeddingConfig = FreeEmbeddingConfig()

    @model_validator(mode="after")
    def _consistent(self):
        if "input_dim" not in self.model.model_fields_set:
            object.__setattr__(self, "model", self.model.model_copy(update={"input_dim": self.data.input_dim}))
        if self.model.input_dim != self.data.input_dim:
            raise ValueError(
                f"model.input_dim ({self.model.input_dim}) != data.input_dim ({self.data.input_dim})"
            )
        if "range" in self.loss.bin.model_fields_set and self.loss.bin.range != self.data.label_range:
            raise ValueError("loss.bin.range must match data.label_range")
        if self.loss.bin.range != self.data.label_range:
            bin_cfg = self.loss.bin.model_copy(update={"range": self.data.label_range})
            object.__setattr__(self, "loss", self.loss.model_copy(update={"bin": bin_cfg}))
        return self

    def with_overrides(self, **sections):
        """Copy with whole sections or top-level fields replaced (re-validated)."""
        raw = self.model_dump(mode="json")
        for k, v in sections.items():
            raw[k] = v.model_dump(mode="json") if isinstance(v, BaseModel) else v
        return RunConfig.model_validate(raw)


PROFILES = {
    "desk": {
        "model": {"encoder_layers": [64, 64], "proj_dim": 16},
        "train": {"epochs": 90},
        "sweep": {"dim_divisor": 16},
    },
    "paper": {
        "model": {"encoder_layers": [512, 512], "proj_dim": 512},
        "train": {"epochs": 90},
        "sweep": {"dim_divisor": 1},
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def build_config(raw=None, scale=None, seed=None):
    raw = dict(raw or {})
    if "version" in raw and raw["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {raw['version']!r} (expected {CONFIG_VERSION})")
    scale = scale or raw.get("scale", "desk")
    if scale not in PROFILES:
        raise ConfigError(f"unknown scale {scale!r}")
    merged = _merge(PROFILES[scale], raw)
    merged["scale"] = scale
    if seed is not None:
        merged["seed"] = seed
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, scale=None, seed=None):
    """Read a JSON config (or use pure defaults when ``path`` is None)."""
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        if "version" not in raw:
            raise ConfigError(f"{path}: missing required 'version' field")
    return build_config(raw, scale, seed)
