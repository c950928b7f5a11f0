"""Build the four row-aligned views of a mini-batch."""

from typing import Optional, Tuple

import numpy as np

from engine.byol.batch import BatchViews
from engine.data.augment import AugmentConfig, AugmentTier, augment
from engine.errors import ContractError
from engine.nn_core.tensor import Tensor
from engine.seeding import derive_seed


def make_views(batch: Tensor, cfg: AugmentConfig, seed: int, labels: Optional[np.ndarray] = None,
               image_shape: Optional[Tuple[int, int]] = None,
               indices: Optional[np.ndarray] = None) -> BatchViews:
    """
    view_a / view_b: independent strong draws; tracin_view_a: the source rows;
    tracin_view_b: light augmentation.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ContractError("make_views needs a non-empty [B, d] batch")
    return BatchViews(
        view_a=augment(batch, cfg, AugmentTier.STRONG, derive_seed(seed, "view_a"), image_shape),
        view_b=augment(batch, cfg, AugmentTier.STRONG, derive_seed(seed, "view_b"), image_shape),
        tracin_view_a=augment(batch, cfg, AugmentTier.NONE, derive_seed(seed, "tracin_view_a"), image_shape),
        tracin_view_b=augment(batch, cfg, AugmentTier.LIGHT, derive_seed(seed, "tracin_view_b"), image_shape),
        labels=labels,
        indices=indices,
    )
