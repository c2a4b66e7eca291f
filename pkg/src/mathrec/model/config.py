from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Union

from mathrec._fields import check_fields
from mathrec.errors import ConfigError

LENGTH_TARGETS = ("counts", "scalar")


@dataclass
class ModelConfig:
    """Network hyperparameters; ``feature_dim`` is the encoder output width D."""

    vocab_size: int
    feature_dim: int = 256
    canvas: tuple[int, int] = (192, 672)
    patch_size: int = 4
    window_size: int = 7
    encoder_depths: tuple[int, ...] = (2, 2, 2, 2)
    encoder_heads: tuple[int, ...] = (1, 2, 4, 8)
    decoder_layers: int = 4
    decoder_heads: int = 8
    ffn_ratio: int = 4
    max_sequence_length: int = 1024
    lam_enabled: bool = True
    lam_heads: int = 8
    length_target: str = "counts"
    dropout: float = 0.1
    memory_position: bool = True

    def __post_init__(self):
        self.canvas = tuple(int(v) for v in self.canvas)
        self.encoder_depths = tuple(int(v) for v in self.encoder_depths)
        self.encoder_heads = tuple(int(v) for v in self.encoder_heads)
        if self.vocab_size < 5:
            raise ConfigError("model.vocab_size must cover the 4 specials plus at least one token")
        if len(self.encoder_depths) != len(self.encoder_heads) or not self.encoder_depths:
            raise ConfigError("model.encoder_depths and model.encoder_heads must have equal length")
        if self.feature_dim % 2 ** (len(self.encoder_depths) - 1):
            raise ConfigError("model.feature_dim must be divisible by 2**(stages - 1)")
        for dim, heads in zip(self.stage_dims, self.encoder_heads):
            if dim % heads:
                raise ConfigError(f"encoder stage dim {dim} not divisible by {heads} heads")
        if self.feature_dim % self.decoder_heads:
            raise ConfigError("model.feature_dim must be divisible by model.decoder_heads")
        if self.lam_enabled and self.feature_dim % self.lam_heads:
            raise ConfigError("model.feature_dim must be divisible by model.lam_heads")
        if self.max_sequence_length < 2:
            raise ConfigError("model.max_sequence_length must be >= 2")
        if len(self.canvas) != 2 or any(c % self.reduction for c in self.canvas):
            raise ConfigError(f"model.canvas sides must be multiples of {self.reduction}")
        if self.length_target not in LENGTH_TARGETS:
            raise ConfigError(f"model.length_target must be one of {LENGTH_TARGETS}")
        if self.memory_position and self.feature_dim % 4:
            raise ConfigError("model.feature_dim must be divisible by 4 for memory_position")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout must lie in [0, 1)")

    @property
    def stage_dims(self) -> tuple[int, ...]:
        n = len(self.encoder_depths)
        base = self.feature_dim // 2 ** (n - 1)
        return tuple(base * 2**i for i in range(n))

    @property
    def reduction(self) -> int:
        return self.patch_size * 2 ** (len(self.encoder_depths) - 1)

    @property
    def num_patches(self) -> int:
        return (self.canvas[0] // self.reduction) * (self.canvas[1] // self.reduction)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("canvas", "encoder_depths", "encoder_heads"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        check_fields(cls, data, "model")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
