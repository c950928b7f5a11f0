"""Learning-rate schedules, selectable by name."""

import math
from typing import Callable, Dict

from engine.errors import ConfigError


def _check(step: int, total_steps: int, warmup_steps: int) -> None:
    if total_steps <= 0:
        raise ConfigError("total_steps must be > 0", "total_steps")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]", "step")
    if not 0 <= warmup_steps <= total_steps:
        raise ConfigError(f"warmup_steps {warmup_steps} outside [0, {total_steps}]", "warmup_steps")


def cosine_lr(step: int, total_steps: int, base_lr: float, warmup_steps: int = 0) -> float:
    """Constant ``base_lr`` during warmup, then half-cosine decay to 0 at ``total_steps``."""
    _check(step, total_steps, warmup_steps)
    if step < warmup_steps:
        return base_lr
    span = total_steps - warmup_steps
    if span == 0:
        return 0.0
    progress = (step - warmup_steps) / span
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def constant_lr(step: int, total_steps: int, base_lr: float, warmup_steps: int = 0) -> float:
    _check(step, total_steps, warmup_steps)
    return base_lr


LR_SCHEDULES: Dict[str, Callable[[int, int, float, int], float]] = {
    "cosine": cosine_lr,
    "constant": constant_lr,
}


def get_lr_schedule(name: str) -> Callable[[int, int, float, int], float]:
    try:
        return LR_SCHEDULES[name]
    except KeyError:
        raise ConfigError(f"unknown lr schedule '{name}' (choices: {sorted(LR_SCHEDULES)})", "lr_schedule")
