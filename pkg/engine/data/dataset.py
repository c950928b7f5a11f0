"""
Labelled datasets: container, seeded Gaussian blobs and stratified splits.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from engine.errors import ConfigError, DimensionError
from engine.nn_core.tensor import Tensor, as_tensor
from engine.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetMeta:
    source: str
    dim: int
    num_classes: int
    image_shape: Optional[Tuple[int, int]] = None

    @property
    def is_raster(self) -> bool:
        return self.image_shape is not None


@dataclass
class Dataset:
    samples: Tensor
    labels: np.ndarray
    meta: DatasetMeta

    def __post_init__(self):
        self.samples = as_tensor(self.samples, name="samples", checked=True)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise DimensionError(f"samples must be [N, d] with N >= 1, got {list(self.samples.shape)}")
        if self.labels.shape != (self.samples.shape[0],):
            raise DimensionError(f"labels shape {self.labels.shape} != ({self.samples.shape[0]},)")
        if self.samples.shape[1] != self.meta.dim:
            raise DimensionError(f"sample width {self.samples.shape[1]} != meta dim {self.meta.dim}")
        if self.labels.min() < 0 or self.labels.max() >= self.meta.num_classes:
            raise ConfigError(f"labels must lie in [0, {self.meta.num_classes})", "labels")
        if self.meta.is_raster:
            height, width = self.meta.image_shape
            if height * width != self.meta.dim:
                raise DimensionError(f"image shape {self.meta.image_shape} does not match dim {self.meta.dim}")
            if self.samples.min() < 0.0 or self.samples.max() > 1.0:
                raise ConfigError("raster samples must be normalized to [0, 1]", "samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.samples[indices], self.labels[indices], self.meta)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.meta.num_classes)


def make_blobs(num_classes: int, per_class: int, d: int, cluster_std: float, seed: int,
               separation: float = 4.0, mean_std: Optional[float] = None) -> Dataset:
    """
    Gaussian blobs. Class means are drawn from N(0, s^2 I) with
    s = separation * cluster_std / sqrt(2 d), which puts the expected distance
    between two means at about ``separation`` cluster standard deviations.
    ``mean_std`` overrides s. Samples are ordered by class.
    """
    if num_classes < 1 or per_class < 1 or d < 1:
        raise ConfigError("num_classes, per_class and d must all be >= 1", "dataset")
    if cluster_std < 0.0:
        raise ConfigError(f"cluster_std must be >= 0, got {cluster_std}", "dataset.cluster_std")
    if mean_std is None:
        mean_std = separation * cluster_std / np.sqrt(2.0 * d)
    rng = make_rng(seed, "blobs")
    means = rng.standard_normal((num_classes, d)) * mean_std
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = rng.standard_normal((num_classes * per_class, d)) * cluster_std
    samples = means[labels] + noise
    return Dataset(samples, labels, DatasetMeta(source="blobs", dim=d, num_classes=num_classes))


def _stratified_pick(labels: np.ndarray, num_classes: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of round(fraction * n_c) samples per class c (at least one per present class)."""
    picked = []
    for label in range(num_classes):
        members = np.flatnonzero(labels == label)
        if members.size == 0:
            continue
        count = max(1, int(round(fraction * members.size)))
        picked.append(rng.permutation(members)[:count])
    return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=np.int64)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified split; every class keeps at least one training sample when it has two or more."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}", "dataset.test_fraction")
    rng = make_rng(seed, "split")
    test_idx = []
    for label in range(dataset.meta.num_classes):
        members = np.flatnonzero(dataset.labels == label)
        if members.size < 2:
            continue
        count = min(members.size - 1, max(1, int(round(test_fraction * members.size))))
        test_idx.append(rng.permutation(members)[:count])
    test_idx = np.sort(np.concatenate(test_idx)) if test_idx else np.zeros(0, dtype=np.int64)
    if test_idx.size == 0:
        raise ConfigError("dataset too small for a train/test split", "dataset")
    train_mask = np.ones(len(dataset), dtype=bool)
    train_mask[test_idx] = False
    return dataset.subset(np.flatnonzero(train_mask)), dataset.subset(test_idx)


def label_subset(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Stratified labelled fraction of ``dataset`` (1.0 returns it unchanged)."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"label_fraction must be in (0, 1], got {fraction}", "eval.label_fraction")
    if fraction == 1.0:
        return dataset
    return dataset.subset(_stratified_pick(dataset.labels, dataset.meta.num_classes, fraction,
                                           make_rng(seed, "label_fraction")))
