from __future__ import annotations

import math

from mathrec.errors import StepOutOfRange


def lr_schedule(step: int, cfg) -> float:
    """Linear warmup from ``warmup_lr`` to ``init_lr``, then cosine decay to ``min_lr``.

    ``cfg`` needs ``total_iterations``, ``warmup_iterations``, ``init_lr``,
    ``min_lr`` and ``warmup_lr``.
    """
    total, warmup = cfg.total_iterations, cfg.warmup_iterations
    if not 0 <= step <= total:
        raise StepOutOfRange(f"step {step} outside [0, {total}]")
    if step < warmup:
        return cfg.warmup_lr + (cfg.init_lr - cfg.warmup_lr) * step / warmup
    if total == warmup:
        return cfg.init_lr
    progress = (step - warmup) / (total - warmup)
    return cfg.min_lr + 0.5 * (cfg.init_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))
