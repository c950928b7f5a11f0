"""The four row-aligned views of a mini-batch."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine.errors import DimensionError
from engine.nn_core.tensor import Tensor


@dataclass
class BatchViews:
    """Training views (strong augmentation) and scoring views (none / light) of the same B rows."""
    view_a: Tensor
    view_b: Tensor
    tracin_view_a: Tensor
    tracin_view_b: Tensor
    labels: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        shapes = {v.shape for v in (self.view_a, self.view_b, self.tracin_view_a, self.tracin_view_b)}
        if len(shapes) != 1:
            raise DimensionError(f"views disagree on shape: {sorted(shapes)}")
        if self.view_a.ndim != 2:
            raise DimensionError(f"views must be [B, d], got {list(self.view_a.shape)}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.size,):
                raise DimensionError(f"labels shape {self.labels.shape} != ({self.size},)")

    @property
    def size(self) -> int:
        return self.view_a.shape[0]
