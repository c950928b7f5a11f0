"""SGD with momentum and L2 weight decay."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from engine.errors import ConfigError, DimensionError
from engine.nn_core.tensor import Tensor, check_finite, checked_mode


@dataclass
class SgdState:
    """Momentum buffers, one per trainable parameter name."""
    momentum: float = 0.9
    weight_decay: float = 1e-5
    momentum_buffers: Dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}", "momentum")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}", "weight_decay")

    @classmethod
    def for_parameters(cls, params: Dict[str, Tensor], momentum: float = 0.9, weight_decay: float = 1e-5) -> "SgdState":
        return cls(momentum=momentum, weight_decay=weight_decay,
                   momentum_buffers={key: np.zeros_like(value) for key, value in params.items()})


def sgd_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: SgdState, lr: float) -> Dict[str, Tensor]:
    """
    In-place update of ``params``:
    buffer <- momentum * buffer + grad + weight_decay * param; param <- param - lr * buffer.
    """
    if lr < 0.0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}", "lr")
    if set(params) != set(grads):
        raise DimensionError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    checked = checked_mode()
    for key in sorted(params):
        param, grad = params[key], grads[key]
        if grad.shape != param.shape:
            raise DimensionError(f"{key}: gradient shape {grad.shape} != parameter shape {param.shape}")
        if checked:
            check_finite(grad, f"grad.{key}")
        buffer = state.momentum_buffers.get(key)
        if buffer is None:
            buffer = np.zeros_like(param)
            state.momentum_buffers[key] = buffer
        buffer[...] = state.momentum * buffer + grad + state.weight_decay * param
        param[...] = param - lr * buffer
    return params
