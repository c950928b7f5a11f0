"""IDX (MNIST-style, big-endian) image and label files."""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from engine.data.dataset import Dataset, DatasetMeta
from engine.errors import FormatError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_header(data: bytes, expected_magic: int, ndims: int, what: str):
    header_size = 4 + 4 * ndims
    if len(data) < header_size:
        raise FormatError(f"{what} file truncated in header", offset=len(data))
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{what} file has magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    dims = struct.unpack(f">{ndims}I", data[4:header_size])
    expected = header_size + int(np.prod(dims))
    if len(data) < expected:
        raise FormatError(f"{what} file truncated: need {expected} bytes, have {len(data)}", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{what} file has {len(data) - expected} trailing bytes", offset=expected)
    return dims, header_size


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path]) -> Dataset:
    """Load an image/label IDX pair; pixels are scaled to [0, 1] and flattened row-major."""
    images = Path(images_path).read_bytes()
    labels = Path(labels_path).read_bytes()

    (count, height, width), image_offset = _read_header(images, IMAGES_MAGIC, 3, "images")
    (label_count,), label_offset = _read_header(labels, LABELS_MAGIC, 1, "labels")
    if count != label_count:
        raise FormatError(f"{count} images but {label_count} labels", offset=4)
    if count == 0:
        raise FormatError("IDX files contain no samples", offset=4)

    pixels = np.frombuffer(images, dtype=np.uint8, offset=image_offset).reshape(count, height * width)
    targets = np.frombuffer(labels, dtype=np.uint8, offset=label_offset).astype(np.int64)
    logger.info(f"Loaded {count} images of {height}x{width} from {images_path}")
    meta = DatasetMeta(source="idx", dim=height * width, num_classes=int(targets.max()) + 1,
                       image_shape=(height, width))
    return Dataset(pixels.astype(np.float64) / 255.0, targets, meta)
