"""
Tensor helpers.

A tensor is a C-contiguous float64 ``numpy.ndarray``; its ``shape`` is the
shape metadata and ``ravel()`` is the row-major data. These helpers enforce
the dtype, the layout and (in checked mode) finiteness at construction.
"""

from typing import Any, Optional, Sequence

import numpy as np

from config.env import settings
from engine.errors import DimensionError, NumericError

Tensor = np.ndarray


def checked_mode() -> bool:
    return settings.CHECKED_MODE


def check_finite(array: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(array)):
        bad = int(np.argmax(~np.isfinite(np.asarray(array).ravel())))
        raise NumericError(f"non-finite value at flat index {bad}", operand=name)


def as_tensor(data: Any, shape: Optional[Sequence[int]] = None, name: str = "tensor",
              checked: Optional[bool] = None) -> Tensor:
    """Convert ``data`` to a contiguous float64 array, optionally reshaping and validating."""
    array = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != array.size:
            raise DimensionError(f"{name}: cannot view {array.size} values as shape {shape}")
        array = array.reshape(shape)
    if checked if checked is not None else checked_mode():
        check_finite(array, name)
    return array
