"""Learning-rate schedule: linear warmup then cosine decay to zero."""

from __future__ import annotations

import math

from medmatting.core import DomainError


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_steps: int) -> float:
    """Rate at an optimizer step: 0 -> base_lr over the warmup, then cosine
    decay base_lr -> 0 over the remaining steps."""
    if total_steps < 1 or base_lr <= 0 or warmup_steps < 0 or warmup_steps > total_steps:
        raise DomainError(
            f"invalid schedule: total={total_steps}, base_lr={base_lr}, warmup={warmup_steps}"
        )
    if step < 0 or step > total_steps:
        raise DomainError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
