"""
Online / target towers.

Online: encoder -> projector -> predictor (trainable).
Target: encoder -> projector (EMA copy of the online encoder/projector, never
touched by the optimizer).
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from engine.errors import ConfigError, DimensionError
from engine.nn_core.network import MlpNetwork, Topology
from engine.nn_core.tensor import Tensor

logger = logging.getLogger(__name__)

ONLINE_NAMES = ("online_encoder", "online_projector", "online_predictor")
TARGET_NAMES = ("target_encoder", "target_projector")


@dataclass(frozen=True)
class TowerTopology:
    encoder: Topology
    projector: Topology
    predictor: Topology

    def __post_init__(self):
        if self.encoder.output_dim != self.projector.input_dim:
            raise ConfigError("encoder output width must equal projector input width", "model")
        if self.projector.output_dim != self.predictor.input_dim:
            raise ConfigError("projector output width must equal predictor input width", "model")
        if self.predictor.output_dim != self.projector.output_dim:
            raise ConfigError("predictor output width must equal the embedding width", "model")

    @classmethod
    def from_widths(cls, input_dim: int, encoder_widths: List[int], hidden_dim: int, embedding_dim: int,
                    activation: str = "relu", encoder_final_activation: bool = False) -> "TowerTopology":
        feature_dim = encoder_widths[-1]
        return cls(
            encoder=Topology((input_dim, *encoder_widths), activation, encoder_final_activation),
            projector=Topology((feature_dim, hidden_dim, embedding_dim), activation),
            predictor=Topology((embedding_dim, hidden_dim, embedding_dim), activation),
        )

    def describe(self) -> Dict:
        return {
            "encoder": self.encoder.describe(),
            "projector": self.projector.describe(),
            "predictor": self.predictor.describe(),
        }

    @classmethod
    def from_description(cls, description: Dict) -> "TowerTopology":
        return cls(
            encoder=Topology.from_description(description["encoder"]),
            projector=Topology.from_description(description["projector"]),
            predictor=Topology.from_description(description["predictor"]),
        )

    def topology_hash(self) -> str:
        parts = "|".join(t.topology_hash() for t in (self.encoder, self.projector, self.predictor))
        return hashlib.sha256(parts.encode("utf-8")).hexdigest()[:16]


@dataclass
class ByolTowers:
    online_encoder: MlpNetwork
    online_projector: MlpNetwork
    online_predictor: MlpNetwork
    target_encoder: MlpNetwork
    target_projector: MlpNetwork

    def __post_init__(self):
        if self.target_encoder.topology != self.online_encoder.topology:
            raise DimensionError("target encoder topology differs from online encoder")
        if self.target_projector.topology != self.online_projector.topology:
            raise DimensionError("target projector topology differs from online projector")
        # Validates the widths chain.
        self.topology

    @classmethod
    def initialize(cls, topology: TowerTopology, rng: np.random.Generator) -> "ByolTowers":
        encoder = MlpNetwork.initialize(topology.encoder, rng)
        projector = MlpNetwork.initialize(topology.projector, rng)
        predictor = MlpNetwork.initialize(topology.predictor, rng)
        return cls(encoder, projector, predictor, encoder.copy(), projector.copy())

    @property
    def topology(self) -> TowerTopology:
        return TowerTopology(self.online_encoder.topology, self.online_projector.topology,
                             self.online_predictor.topology)

    def networks(self) -> Dict[str, MlpNetwork]:
        return {name: getattr(self, name) for name in ONLINE_NAMES + TARGET_NAMES}

    def online_networks(self) -> Dict[str, MlpNetwork]:
        return {name: getattr(self, name) for name in ONLINE_NAMES}

    def online_parameters(self) -> Dict[str, Tensor]:
        """Live online parameters keyed ``<network>/<parameter>``."""
        return {f"{name}/{key}": value
                for name, net in self.online_networks().items()
                for key, value in net.named_parameters().items()}

    def target_parameters(self) -> Dict[str, Tensor]:
        return {f"{name}/{key}": value
                for name in TARGET_NAMES
                for key, value in getattr(self, name).named_parameters().items()}

    def all_parameters(self) -> Dict[str, Tensor]:
        return {**self.online_parameters(), **self.target_parameters()}

    def encode(self, x: Tensor) -> Tensor:
        """Online encoder features (no caching), the representation under evaluation."""
        return self.online_encoder.forward(x, cache=False)

    def online_project(self, x: Tensor, cache: bool = False) -> Tensor:
        return self.online_projector.forward(self.online_encoder.forward(x, cache=cache), cache=cache)

    def online_forward(self, x: Tensor, cache: bool = True) -> Tensor:
        """Predictor output q; with ``cache`` the pass can be followed by ``online_backward``."""
        return self.online_predictor.forward(self.online_project(x, cache=cache), cache=cache)

    def target_forward(self, x: Tensor) -> Tensor:
        return self.target_projector.forward(self.target_encoder.forward(x, cache=False), cache=False)

    def online_backward(self, grad_q: Tensor) -> Dict[str, Tensor]:
        """Backpropagate d loss / d q through predictor, projector and encoder."""
        grads: Dict[str, Tensor] = {}
        grad = grad_q
        for name in reversed(ONLINE_NAMES):
            result = getattr(self, name).backward(grad)
            grads.update({f"{name}/{key}": value for key, value in result.params.items()})
            grad = result.grad_input
        return grads

    def clear_caches(self) -> None:
        for net in self.networks().values():
            net.clear_cache()

    def reset_counters(self) -> None:
        for net in self.networks().values():
            net.reset_counters()

    def pass_counts(self) -> Dict[str, Dict[str, int]]:
        return {name: {"forward": net.forward_calls, "backward": net.backward_calls}
                for name, net in self.networks().items()}

    def copy(self) -> "ByolTowers":
        return ByolTowers(**{name: net.copy() for name, net in self.networks().items()})

    def parameter_hash(self, names: Optional[List[str]] = None) -> str:
        digest = hashlib.sha256()
        for name, net in self.networks().items():
            if names is None or name in names:
                digest.update(name.encode("utf-8"))
                digest.update(net.parameter_hash().encode("utf-8"))
        return digest.hexdigest()
