"""
Frozen-representation probes: a linear softmax classifier and cosine kNN.

Both read embeddings from the encoder without caching and check its
parameter hash before and after, so evaluation can never train it.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import softmax

from engine.data.dataset import Dataset, label_subset
from engine.errors import ConfigError, StateError
from engine.nn_core.network import MlpNetwork
from engine.nn_core.tensor import Tensor

logger = logging.getLogger(__name__)

_STD_FLOOR = 1e-8
_NORM_FLOOR = 1e-12
_PRIOR_FLOOR = 1e-12


@dataclass
class ProbeResult:
    accuracy: float
    warnings: List[str] = field(default_factory=list)


def embed(encoder: MlpNetwork, dataset: Dataset) -> Tensor:
    return encoder.forward(dataset.samples, cache=False)


def _check_frozen(encoder: MlpNetwork, before: str) -> None:
    if encoder.parameter_hash() != before:
        raise StateError("encoder parameters changed during evaluation")


def linear_probe(encoder: MlpNetwork, train: Dataset, test: Dataset, epochs: int, lr: float,
                 label_fraction: float = 1.0, seed: int = 0) -> ProbeResult:
    """
    Full-batch gradient descent on softmax cross-entropy over standardized
    frozen embeddings. Weights start at zero and the bias at the log class
    priors of the probe training set, so with ``epochs = 0`` every test point
    gets the most frequent class (lowest label on ties).
    """
    if epochs < 0:
        raise ConfigError(f"probe epochs must be >= 0, got {epochs}", "eval.probe_epochs")
    if lr <= 0.0:
        raise ConfigError(f"probe lr must be > 0, got {lr}", "eval.probe_lr")
    frozen = encoder.parameter_hash()
    train = label_subset(train, label_fraction, seed)
    num_classes = max(train.meta.num_classes, test.meta.num_classes)

    warnings = []
    counts = np.bincount(train.labels, minlength=num_classes)
    present = counts > 0
    for label in np.flatnonzero(~present):
        message = f"class {int(label)} absent from probe training set"
        logger.warning(message)
        warnings.append(message)

    features = embed(encoder, train)
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), _STD_FLOOR)
    x_train = (features - mean) / std
    x_test = (embed(encoder, test) - mean) / std

    weight = np.zeros((x_train.shape[1], num_classes))
    bias = np.log(np.maximum(counts / counts.sum(), _PRIOR_FLOOR))
    onehot = np.eye(num_classes)[train.labels]
    n = x_train.shape[0]
    for _ in range(epochs):
        probs = softmax(x_train @ weight + bias, axis=1)
        delta = (probs - onehot) / n
        weight -= lr * (x_train.T @ delta)
        bias -= lr * delta.sum(axis=0)

    predictions = np.argmax(x_test @ weight + bias, axis=1)
    _check_frozen(encoder, frozen)
    accuracy = float(np.mean(predictions == test.labels))
    logger.debug(f"linear probe: {epochs} epochs, accuracy {accuracy:.4f}")
    return ProbeResult(accuracy=accuracy, warnings=warnings)


def _unit_rows(features: Tensor) -> Tensor:
    return features / np.maximum(np.linalg.norm(features, axis=1, keepdims=True), _NORM_FLOOR)


def knn_predict(train_features: Tensor, train_labels: np.ndarray, test_features: Tensor, k: int,
                num_classes: Optional[int] = None) -> np.ndarray:
    """Majority vote of the k most cosine-similar training rows; ties go to the lowest label."""
    if not 1 <= k <= train_features.shape[0]:
        raise ConfigError(f"k must be in [1, {train_features.shape[0]}], got {k}", "eval.knn_k")
    if num_classes is None:
        num_classes = int(train_labels.max()) + 1
    similarity = _unit_rows(test_features) @ _unit_rows(train_features).T
    neighbours = np.argsort(-similarity, axis=1, kind="stable")[:, :k]
    votes = np.stack([np.bincount(train_labels[row], minlength=num_classes) for row in neighbours])
    return np.argmax(votes, axis=1)


def knn_eval(encoder: MlpNetwork, train: Dataset, test: Dataset, k: int) -> float:
    frozen = encoder.parameter_hash()
    num_classes = max(train.meta.num_classes, test.meta.num_classes)
    predictions = knn_predict(embed(encoder, train), train.labels, embed(encoder, test), k, num_classes)
    _check_frozen(encoder, frozen)
    return float(np.mean(predictions == test.labels))
