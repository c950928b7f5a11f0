"""Target-tower exponential moving average and its decay schedule."""

import math
from dataclasses import dataclass
from enum import Enum

from engine.byol.towers import ByolTowers
from engine.errors import ConfigError


class EmaMode(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"  # tau_base -> 1


@dataclass(frozen=True)
class EmaSchedule:
    tau_base: float = 0.99
    total_steps: int = 1
    mode: EmaMode = EmaMode.COSINE

    def __post_init__(self):
        if not 0.0 <= self.tau_base <= 1.0:
            raise ConfigError(f"tau_base must be in [0, 1], got {self.tau_base}", "tau_base")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0", "total_steps")
        object.__setattr__(self, "mode", EmaMode(self.mode))

    def tau(self, step: int) -> float:
        if self.mode == EmaMode.CONSTANT or self.total_steps == 0:
            return self.tau_base
        progress = min(max(step, 0), self.total_steps) / self.total_steps
        return 1.0 - (1.0 - self.tau_base) * (math.cos(math.pi * progress) + 1.0) / 2.0


def ema_update(towers: ByolTowers, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, for encoder and projector."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must be in [0, 1], got {tau}", "tau")
    pairs = ((towers.online_encoder, towers.target_encoder), (towers.online_projector, towers.target_projector))
    for online, target in pairs:
        online_params = online.named_parameters()
        for key, target_value in target.named_parameters().items():
            target_value[...] = tau * target_value + (1.0 - tau) * online_params[key]
