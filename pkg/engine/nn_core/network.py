"""
Multi-layer perceptron built from LinearLayer and activation entries.

The topology descriptor fully determines the layer list, so a network can be
rebuilt from (topology, flat parameters) and a checkpoint can be checked
against a model by comparing topology hashes.
"""

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from engine.errors import ConfigError, DimensionError, StateError
from engine.nn_core.layers import ACTIVATIONS, Layer, LinearLayer, check_gradients
from engine.nn_core.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Topology:
    """Layer widths plus activation kind; ``widths[0]`` is the input width."""
    widths: Tuple[int, ...]
    activation: str = "relu"
    final_activation: bool = False
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise ConfigError("topology needs at least an input and an output width", "widths")
        if any(w < 1 for w in self.widths):
            raise ConfigError(f"all widths must be >= 1, got {list(self.widths)}", "widths")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{self.activation}'", "activation")

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def describe(self) -> Dict:
        return {
            "widths": list(self.widths),
            "activation": self.activation,
            "final_activation": self.final_activation,
            "bias": self.bias,
        }

    @classmethod
    def from_description(cls, description: Dict) -> "Topology":
        return cls(
            widths=tuple(description["widths"]),
            activation=description.get("activation", "relu"),
            final_activation=bool(description.get("final_activation", False)),
            bias=bool(description.get("bias", True)),
        )

    def topology_hash(self) -> str:
        payload = json.dumps(self.describe(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class Gradients:
    """Result of a backward pass."""
    params: Dict[str, Tensor]
    grad_input: Tensor


class MlpNetwork:
    """Ordered stack of layers with forward/backward and pass counters."""

    def __init__(self, topology: Topology, layers: List[Layer]):
        self.topology = topology
        self.layers = layers
        self.forward_calls = 0
        self.backward_calls = 0
        self._check_layers()

    def _check_layers(self) -> None:
        linears = self.linear_layers()
        for index, (layer, (n_in, n_out)) in enumerate(
                zip(linears, zip(self.topology.widths[:-1], self.topology.widths[1:]))):
            if (layer.n_in, layer.n_out) != (n_in, n_out):
                raise DimensionError(
                    f"layer shape [{layer.n_out}, {layer.n_in}] incompatible with topology {list(self.topology.widths)}",
                    layer_index=index,
                )
        if len(linears) != len(self.topology.widths) - 1:
            raise DimensionError(f"expected {len(self.topology.widths) - 1} linear layers, found {len(linears)}")

    @staticmethod
    def _build_layers(topology: Topology, linears: Sequence[LinearLayer]) -> List[Layer]:
        layers: List[Layer] = []
        last = len(linears) - 1
        for index, linear in enumerate(linears):
            layers.append(linear)
            if index < last or topology.final_activation:
                layers.append(ACTIVATIONS[topology.activation]())
        return layers

    @classmethod
    def initialize(cls, topology: Topology, rng: np.random.Generator) -> "MlpNetwork":
        linears = [
            LinearLayer.initialize(n_in, n_out, rng, bias=topology.bias)
            for n_in, n_out in zip(topology.widths[:-1], topology.widths[1:])
        ]
        return cls(topology, cls._build_layers(topology, linears))

    @classmethod
    def from_linear_layers(cls, topology: Topology, linears: Sequence[LinearLayer]) -> "MlpNetwork":
        return cls(topology, cls._build_layers(topology, linears))

    @classmethod
    def from_parameters(cls, topology: Topology, params: Dict[str, Tensor]) -> "MlpNetwork":
        linears = []
        for index in range(len(topology.widths) - 1):
            try:
                weight = params[f"layers.{index}.weight"]
            except KeyError:
                raise DimensionError(f"missing parameter layers.{index}.weight", layer_index=index)
            bias = params.get(f"layers.{index}.bias") if topology.bias else None
            linears.append(LinearLayer(np.array(weight, dtype=np.float64), None if bias is None else np.array(bias, dtype=np.float64)))
        return cls.from_linear_layers(topology, linears)

    @property
    def input_dim(self) -> int:
        return self.topology.input_dim

    @property
    def output_dim(self) -> int:
        return self.topology.output_dim

    def linear_layers(self) -> List[LinearLayer]:
        return [layer for layer in self.layers if isinstance(layer, LinearLayer)]

    @property
    def last_linear(self) -> LinearLayer:
        return self.linear_layers()[-1]

    @property
    def last_linear_input(self) -> Optional[Tensor]:
        """Input activations of the final linear layer from the latest cached forward."""
        return self.last_linear.cached_input

    def forward(self, x: Tensor, cache: bool = True) -> Tensor:
        x = as_tensor(x, name="input")
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionError(f"expected input [B, {self.input_dim}] with B >= 1, got {list(x.shape)}", layer_index=0)
        self.forward_calls += 1
        linear_index = 0
        for layer in self.layers:
            if isinstance(layer, LinearLayer):
                if x.shape[1] != layer.n_in:
                    raise DimensionError(f"expected input width {layer.n_in}, got {x.shape[1]}", layer_index=linear_index)
                linear_index += 1
            x = layer.forward(x, cache=cache)
        return x

    def backward(self, grad_out: Tensor) -> Gradients:
        """Backpropagate ``grad_out``; returns gradients of the batch-mean loss."""
        if self.last_linear.cached_input is None:
            raise StateError("backward called without a preceding forward pass")
        grad = as_tensor(grad_out, name="grad_out")
        batch = self.linear_layers()[0].cached_input.shape[0]
        if grad.shape != (batch, self.output_dim):
            raise DimensionError(f"expected output gradient [{batch}, {self.output_dim}], got {list(grad.shape)}",
                                 layer_index=len(self.topology.widths) - 2)
        self.backward_calls += 1
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        grads = self.gradients()
        check_gradients(grads, "grad")
        return Gradients(params=grads, grad_input=grad)

    def named_parameters(self) -> Dict[str, Tensor]:
        """Live parameter arrays keyed ``layers.<i>.weight`` / ``layers.<i>.bias``."""
        params: Dict[str, Tensor] = {}
        for index, layer in enumerate(self.linear_layers()):
            for key, value in layer.parameters().items():
                params[f"layers.{index}.{key}"] = value
        return params

    def gradients(self) -> Dict[str, Tensor]:
        grads: Dict[str, Tensor] = {}
        for index, layer in enumerate(self.linear_layers()):
            for key, value in layer.gradients().items():
                grads[f"layers.{index}.{key}"] = value
        return grads

    def clear_cache(self) -> None:
        for layer in self.layers:
            layer.clear_cache()

    def reset_counters(self) -> None:
        self.forward_calls = 0
        self.backward_calls = 0

    def copy(self) -> "MlpNetwork":
        clone = copy.deepcopy(self)
        clone.clear_cache()
        clone.reset_counters()
        return clone

    def load_parameters(self, params: Dict[str, Tensor]) -> None:
        own = self.named_parameters()
        if set(own) != set(params):
            raise DimensionError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for key, value in own.items():
            if np.shape(params[key]) != value.shape:
                raise DimensionError(f"{key}: expected shape {value.shape}, got {np.shape(params[key])}")
            value[...] = params[key]

    def parameter_hash(self) -> str:
        digest = hashlib.sha256()
        for key, value in sorted(self.named_parameters().items()):
            digest.update(key.encode("utf-8"))
            digest.update(np.ascontiguousarray(value).tobytes())
        return digest.hexdigest()


def forward(net: MlpNetwork, x: Tensor) -> Tensor:
    return net.forward(x)


def backward(net: MlpNetwork, grad_out: Tensor) -> Dict[str, Tensor]:
    return net.backward(grad_out).params
