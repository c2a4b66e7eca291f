"""Training losses: next-token cross-entropy, SmoothL1 length loss, weighted sum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch

from mathrec.errors import ConfigError, NonFiniteLoss, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    lm: float = 1.0
    length: float = 0.5

    def __post_init__(self):
        if self.lm < 0 or self.length < 0:
            raise ConfigError("loss weights must be non-negative")


def language_modeling_loss(logits: torch.Tensor, targets: torch.Tensor,
                           pad_id: int = 0) -> torch.Tensor:
    """Mean over non-pad positions of ``-log softmax(logits)[target]``.

    ``logits`` is ``(B, N, C)`` and ``targets`` ``(B, N)``.  A batch with no
    non-pad target gives 0 (still attached to the graph) and a warning.
    """
    if logits.ndim != 3 or targets.shape != logits.shape[:2]:
        raise ShapeMismatch(
            f"logits {tuple(logits.shape)} do not match targets {tuple(targets.shape)}")
    mask = targets != pad_id
    n = int(mask.sum())
    if n == 0:
        logger.warning("language-modeling loss over an all-padding batch; defining it as 0")
        return logits.sum() * 0.0
    log_probs = torch.log_softmax(logits, dim=-1)
    picked = log_probs.gather(-1, targets.clamp_min(0).unsqueeze(-1)).squeeze(-1)
    return -(picked * mask).sum() / n


def smooth_l1(residual: torch.Tensor) -> torch.Tensor:
    a = residual.abs()
    return torch.where(a < 1.0, 0.5 * residual * residual, a - 0.5)


def length_loss(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Element-wise SmoothL1 between predicted and true counts, averaged."""
    if predicted.shape != target.shape:
        raise ShapeMismatch(
            f"predicted {tuple(predicted.shape)} does not match target {tuple(target.shape)}")
    if predicted.numel() == 0:
        return predicted.sum()
    return smooth_l1(predicted - target.to(predicted.dtype)).mean()


def total_loss(lm, length, weights: LossWeights = LossWeights()):
    """``weights.lm * lm + weights.length * length``; ``length=None`` counts as 0."""
    if length is None:
        length = 0.0
    for name, value in (("lm", lm), ("length", length)):
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise NonFiniteLoss(f"{name} loss is {v}")
    return weights.lm * lm + weights.length * length
