from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from mathrec._fields import check_fields
from mathrec.augment import AugmentConfig
from mathrec.errors import ConfigError
from mathrec.model.config import ModelConfig
from mathrec.model.losses import LossWeights


@dataclass
class TrainConfig:
    """Optimization settings. Defaults are the desk-scale ones."""

    train_manifest: str
    output_dir: str
    val_manifest: Optional[str] = None
    total_iterations: int = 2000
    warmup_iterations: Optional[int] = None
    init_lr: float = 1e-4
    min_lr: float = 1e-8
    warmup_lr: float = 1e-5
    weight_decay: float = 0.05
    batch_size: int = 8
    seed: int = 0
    loss_weights: dict = field(default_factory=lambda: {"lm": 1.0, "length": 0.5})
    augment: Optional[dict] = None
    model: dict = field(default_factory=dict)
    checkpoint_interval: int = 500
    val_interval: int = 0
    grad_clip: float = 1.0
    workers: int = 0

    def __post_init__(self):
        if self.warmup_iterations is None:
            self.warmup_iterations = int(0.02 * self.total_iterations)
        if self.total_iterations < 0:
            raise ConfigError("train.total_iterations must be >= 0")
        if self.total_iterations and not 0 <= self.warmup_iterations < self.total_iterations:
            raise ConfigError("train.warmup_iterations must satisfy 0 <= warmup < total_iterations")
        if not self.total_iterations and self.warmup_iterations:
            raise ConfigError("train.warmup_iterations must be 0 when total_iterations is 0")
        if not self.min_lr <= self.warmup_lr <= self.init_lr:
            raise ConfigError("train: learning rates must satisfy min_lr <= warmup_lr <= init_lr")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError("train.checkpoint_interval must be >= 1")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigError("train: weight_decay must be >= 0 and grad_clip > 0")
        if not isinstance(self.loss_weights, Mapping) or set(self.loss_weights) - {"lm", "length"}:
            raise ConfigError("train.loss_weights must be a mapping with keys 'lm' and 'length'")
        if not isinstance(self.model, Mapping):
            raise ConfigError("train.model must be a mapping of model settings")
        check_fields(ModelConfig, self.model, "model", partial=True)
        self.weights  # validate
        self.augment_config  # validate

    @property
    def weights(self) -> LossWeights:
        return LossWeights(float(self.loss_weights.get("lm", 1.0)),
                           float(self.loss_weights.get("length", 0.5)))

    @property
    def augment_config(self) -> AugmentConfig:
        if self.augment is None:
            return AugmentConfig.disabled()
        return AugmentConfig.from_dict(self.augment)

    def to_dict(self) -> dict:
        return copy.deepcopy(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        check_fields(cls, data, "train")
        return cls(**copy.deepcopy(dict(data)))


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    return key.strip(), value


def apply_overrides(data: dict, overrides) -> dict:
    """Set dotted keys, e.g. ``model.feature_dim=128``."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        key, value = parse_override(item)
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {part} is not a mapping")
        node[parts[-1]] = value
    return data


def load_train_config(path: Union[str, Path], overrides=None) -> TrainConfig:
    """Read a YAML (or JSON) config file; relative paths resolve against its folder."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    data = apply_overrides(data, overrides)
    for key in ("train_manifest", "val_manifest", "output_dir"):
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(path.parent / value)
    return TrainConfig.from_dict(data)
