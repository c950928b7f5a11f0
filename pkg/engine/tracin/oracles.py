"""
Reference computations for checking TracIn scores on small models.

A sample is a pair (x_a, x_b): q and a come from the online tower on x_a, the
constant target z from the target tower on x_b. These helpers run real
forward/backward passes and are meant for tests and diagnostics, not for the
training loop.
"""

from typing import Dict, Literal, Tuple, Union

import numpy as np

from engine.byol.loss import byol_loss, byol_loss_grad_rows
from engine.byol.towers import ByolTowers
from engine.errors import ConfigError
from engine.nn_core.tensor import Tensor

Sample = Union[Tensor, Tuple[Tensor, Tensor]]
Trainable = Literal["all", "last_layer"]


def _views(sample: Sample) -> Tuple[Tensor, Tensor]:
    if isinstance(sample, tuple):
        x_a, x_b = sample
    else:
        x_a = x_b = sample
    return np.atleast_2d(np.asarray(x_a, dtype=np.float64)), np.atleast_2d(np.asarray(x_b, dtype=np.float64))


def last_layer_key(towers: ByolTowers) -> str:
    index = len(towers.online_predictor.topology.widths) - 2
    return f"online_predictor/layers.{index}.weight"


def sample_loss(towers: ByolTowers, sample: Sample) -> float:
    x_a, x_b = _views(sample)
    q = towers.online_forward(x_a, cache=False)
    z = towers.target_forward(x_b)
    return byol_loss(q[0], z[0])


def sample_gradient(towers: ByolTowers, sample: Sample, trainable: Trainable = "all") -> Dict[str, Tensor]:
    """Parameter gradient of one sample's loss, from a batch-of-one backward pass."""
    x_a, x_b = _views(sample)
    q = towers.online_forward(x_a)
    z = towers.target_forward(x_b)
    grads = towers.online_backward(byol_loss_grad_rows(q, z))
    if trainable == "all":
        return grads
    if trainable == "last_layer":
        key = last_layer_key(towers)
        return {key: grads[key]}
    raise ConfigError(f"unknown trainable set '{trainable}'", "trainable")


def gradient_dot(towers: ByolTowers, sample_i: Sample, sample_k: Sample, trainable: Trainable = "all") -> float:
    grads_i = sample_gradient(towers, sample_i, trainable)
    grads_k = sample_gradient(towers, sample_k, trainable)
    return float(sum(np.vdot(grads_i[key], grads_k[key]) for key in sorted(grads_i)))


def first_order_tracin(towers: ByolTowers, sample_i: Sample, sample_k: Sample, lr: float,
                       trainable: Trainable = "all") -> float:
    """lr * <grad loss(x_i), grad loss(x_k)>."""
    return lr * gradient_dot(towers, sample_i, sample_k, trainable)


def idealized_tracin_oracle(towers: ByolTowers, sample_i: Sample, sample_k: Sample, steps: int,
                            lr: float, trainable: Trainable = "all") -> float:
    """
    Train a copy of ``towers`` on x_i alone with plain SGD for ``steps`` steps and
    return the summed loss reduction on x_k. The target tower stays fixed.
    """
    if steps < 0:
        raise ConfigError("steps must be >= 0", "steps")
    model = towers.copy()
    total = 0.0
    for _ in range(steps):
        before = sample_loss(model, sample_k)
        grads = sample_gradient(model, sample_i, trainable)
        params = model.online_parameters()
        for key, grad in grads.items():
            params[key][...] = params[key] - lr * grad
        after = sample_loss(model, sample_k)
        total += before - after
    return total
