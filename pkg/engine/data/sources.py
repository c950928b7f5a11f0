"""Build the train/test datasets a run config describes."""

import logging
from typing import Tuple

from engine.data.dataset import Dataset, make_blobs, train_test_split
from engine.data.idx import load_idx
from engine.errors import ConfigError
from engine.seeding import derive_seed

logger = logging.getLogger(__name__)


def load_dataset(block) -> Dataset:
    """``block`` is a resolved ``DatasetBlock`` (its seed is set)."""
    if block.seed is None:
        raise ConfigError("dataset.seed must be resolved before loading", "dataset.seed")
    if block.source == "blobs":
        return make_blobs(block.num_classes, block.per_class, block.dim, block.cluster_std, block.seed,
                          separation=block.separation)
    if block.source == "idx":
        return load_idx(block.images_path, block.labels_path)
    raise ConfigError(f"unknown dataset source '{block.source}'", "dataset.source")


def load_splits(block) -> Tuple[Dataset, Dataset]:
    dataset = load_dataset(block)
    train, test = train_test_split(dataset, block.test_fraction, derive_seed(block.seed, "split"))
    logger.info(f"Dataset '{block.source}': {len(train)} train / {len(test)} test, "
                f"{dataset.meta.num_classes} classes, dim {dataset.meta.dim}")
    return train, test
