"""
Dense layers with manual backpropagation.

Forward passes cache what the backward pass needs. ``backward`` takes the
per-sample output gradient (row i is d loss_i / d output_i) and stores
parameter gradients of the batch-mean loss.
"""

from typing import Dict, Optional

import numpy as np

from engine.errors import DimensionError, StateError
from engine.nn_core.tensor import Tensor, as_tensor, check_finite, checked_mode


class Layer:
    """Parent class for network layers."""

    def forward(self, inputs: Tensor, cache: bool = True) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> Dict[str, Tensor]:
        return {}

    def gradients(self) -> Dict[str, Tensor]:
        return {}

    def clear_cache(self) -> None:
        pass


class LinearLayer(Layer):
    """Affine map ``y = x W^T + b`` with weight of shape [n_out, n_in]."""

    def __init__(self, weight: Tensor, bias: Optional[Tensor] = None):
        weight = as_tensor(weight, name="weight")
        if weight.ndim != 2:
            raise DimensionError(f"weight must be 2-D, got shape {weight.shape}")
        self._weight = weight
        self.bias = None
        if bias is not None:
            self.bias = as_tensor(bias, name="bias")
            if self.bias.shape != (weight.shape[0],):
                raise DimensionError(f"bias shape {self.bias.shape} does not match n_out={weight.shape[0]}")
        self.cached_input: Optional[Tensor] = None
        self.grad_weight: Optional[Tensor] = None
        self.grad_bias: Optional[Tensor] = None

    @classmethod
    def initialize(cls, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True) -> "LinearLayer":
        # He-normal init for ReLU stacks; biases start at zero.
        weight = rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)
        return cls(weight, np.zeros(n_out) if bias else None)

    @property
    def weight(self) -> Tensor:
        return self._weight

    @weight.setter
    def weight(self, value: Tensor) -> None:
        value = as_tensor(value, name="weight")
        if value.shape != self._weight.shape:
            raise DimensionError(f"weight shape is fixed at {self._weight.shape}, got {value.shape}")
        self._weight[...] = value

    @property
    def n_in(self) -> int:
        return self._weight.shape[1]

    @property
    def n_out(self) -> int:
        return self._weight.shape[0]

    def forward(self, inputs: Tensor, cache: bool = True) -> Tensor:
        if inputs.ndim != 2 or inputs.shape[1] != self.n_in:
            raise DimensionError(f"expected input [B, {self.n_in}], got {list(inputs.shape)}")
        if cache:
            self.cached_input = inputs
        outputs = inputs @ self._weight.T
        if self.bias is not None:
            outputs = outputs + self.bias
        return outputs

    def backward(self, grad: Tensor) -> Tensor:
        if self.cached_input is None:
            raise StateError("backward called without a preceding forward pass")
        inputs = self.cached_input
        batch = inputs.shape[0]
        if grad.shape != (batch, self.n_out):
            raise DimensionError(f"expected output gradient [{batch}, {self.n_out}], got {list(grad.shape)}")
        self.grad_weight = grad.T @ inputs / batch
        if self.bias is not None:
            self.grad_bias = grad.sum(axis=0) / batch
        self.cached_input = None
        return grad @ self._weight

    def parameters(self) -> Dict[str, Tensor]:
        params = {"weight": self._weight}
        if self.bias is not None:
            params["bias"] = self.bias
        return params

    def gradients(self) -> Dict[str, Tensor]:
        grads = {"weight": self.grad_weight}
        if self.bias is not None:
            grads["bias"] = self.grad_bias
        return grads

    def clear_cache(self) -> None:
        self.cached_input = None


class ReLU(Layer):
    def __init__(self):
        self.mask: Optional[Tensor] = None

    def forward(self, inputs: Tensor, cache: bool = True) -> Tensor:
        if cache:
            self.mask = inputs > 0
        return np.maximum(inputs, 0.0)

    def backward(self, grad: Tensor) -> Tensor:
        if self.mask is None:
            raise StateError("backward called without a preceding forward pass")
        out = grad * self.mask
        self.mask = None
        return out

    def clear_cache(self) -> None:
        self.mask = None


class Tanh(Layer):
    def __init__(self):
        self.output: Optional[Tensor] = None

    def forward(self, inputs: Tensor, cache: bool = True) -> Tensor:
        outputs = np.tanh(inputs)
        if cache:
            self.output = outputs
        return outputs

    def backward(self, grad: Tensor) -> Tensor:
        if self.output is None:
            raise StateError("backward called without a preceding forward pass")
        out = grad * (1.0 - self.output ** 2)
        self.output = None
        return out

    def clear_cache(self) -> None:
        self.output = None


ACTIVATIONS = {
    "relu": ReLU,
    "tanh": Tanh,
}


def check_gradients(grads: Dict[str, Tensor], name: str) -> None:
    if checked_mode():
        for key, value in grads.items():
            check_finite(value, f"{name}.{key}")
