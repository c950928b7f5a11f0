"""Shared fixtures: small towers, small run configs and an IDX file writer."""

import os
import struct
import sys
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

# Add the project root to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.run_config import parse_run_config
from engine.byol.towers import ByolTowers, TowerTopology
from engine.data.dataset import make_blobs


def write_idx_files(directory: Path, images: np.ndarray, labels: np.ndarray,
                    images_magic: int = 0x00000803, labels_magic: int = 0x00000801):
    """Write uint8 images [N, H, W] and labels [N] as big-endian IDX files."""
    directory.mkdir(parents=True, exist_ok=True)
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    images_path = directory / "images.idx"
    labels_path = directory / "labels.idx"
    count, height, width = images.shape
    images_path.write_bytes(struct.pack(">IIII", images_magic, count, height, width) + images.tobytes())
    labels_path.write_bytes(struct.pack(">II", labels_magic, labels.shape[0]) + labels.tobytes())
    return images_path, labels_path


@pytest.fixture
def idx_writer(tmp_path):
    def _write(images, labels, **kwargs):
        return write_idx_files(tmp_path / "idx", images, labels, **kwargs)
    return _write


@pytest.fixture
def small_topology() -> TowerTopology:
    return TowerTopology.from_widths(input_dim=6, encoder_widths=[8, 5], hidden_dim=7, embedding_dim=4)


@pytest.fixture
def small_towers(small_topology) -> ByolTowers:
    towers = ByolTowers.initialize(small_topology, np.random.default_rng(7))
    # Decouple target from online so the additional-positive terms are non-trivial.
    rng = np.random.default_rng(8)
    for value in towers.target_parameters().values():
        value += 0.1 * rng.standard_normal(value.shape)
    return towers


def small_config_dict(tmp_path: Path, **overrides: Dict[str, Any]) -> Dict[str, Any]:
    """A fast blobs config; ``overrides`` maps block name to a dict merged into it."""
    data: Dict[str, Any] = {
        "seed": 3,
        "dataset": {"source": "blobs", "num_classes": 3, "per_class": 20, "dim": 6, "cluster_std": 0.5,
                    "separation": 6.0, "test_fraction": 0.25},
        "model": {"encoder_widths": [10, 6], "hidden_dim": 8, "embedding_dim": 5},
        "train": {"epochs": 2, "batch_size": 8, "base_lr": 0.05, "k": 1},
        "augment": {"strong": {"rotation_choices": [0]}},
        "policy": {"kind": "tracin"},
        "io": {"out_dir": str(tmp_path / "out")},
        "eval": {"probe_epochs": 50, "probe_lr": 0.5, "knn_k": 3},
        "compare": {"seeds": [0, 1, 2]},
    }
    for block, values in overrides.items():
        if isinstance(values, dict):
            data[block] = {**data.get(block, {}), **values}
        else:
            data[block] = values
    return data


@pytest.fixture
def small_config(tmp_path):
    def _make(**overrides):
        return parse_run_config(small_config_dict(tmp_path, **overrides))
    return _make


@pytest.fixture
def blobs():
    return make_blobs(num_classes=3, per_class=10, d=6, cluster_std=0.5, seed=11, separation=6.0)
