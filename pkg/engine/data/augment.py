"""
Two-tier augmentation.

Strong tier (training views): flip -> rotate -> crop -> jitter.
Light tier (TracIn scoring view): horizontal flip + center crop.

Raster data (meta.image_shape set) gets the image operations; rasters stay in
[0, 1] (jitter is clamped). Vector data uses analogues: horizontal/vertical
flips negate a fixed half of the coordinates (the two halves are
complementary), crops zero a random subset of coordinates keeping the sampled
scale fraction, the center crop keeps a centered block of coordinates, and
jitter adds Gaussian noise. Rotation is raster-only.
"""

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

from engine.errors import ConfigError
from engine.nn_core.tensor import Tensor
from engine.seeding import make_rng


class AugmentTier(str, Enum):
    NONE = "none"
    LIGHT = "light"
    STRONG = "strong"


class StrongAugment(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hflip_p: float = Field(default=0.5, ge=0.0, le=1.0)
    vflip_p: float = Field(default=0.0, ge=0.0, le=1.0)
    crop_scale_range: Tuple[float, float] = (0.6, 1.0)
    jitter_std: float = Field(default=0.1, ge=0.0)
    rotation_choices: List[int] = Field(default_factory=lambda: [0])

    @field_validator("crop_scale_range")
    @classmethod
    def _check_crop(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0.0 < low <= high <= 1.0:
            raise ValueError("crop_scale_range must satisfy 0 < low <= high <= 1")
        return value

    @field_validator("rotation_choices")
    @classmethod
    def _check_rotations(cls, value: List[int]) -> List[int]:
        if not value or any(angle not in (0, 90, 180, 270) for angle in value):
            raise ValueError("rotation_choices must be a non-empty subset of {0, 90, 180, 270}")
        return value


class LightAugment(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hflip_p: float = Field(default=0.5, ge=0.0, le=1.0)
    center_crop_fraction: float = Field(default=0.9, gt=0.0, le=1.0)


class AugmentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strong: StrongAugment = Field(default_factory=StrongAugment)
    light: LightAugment = Field(default_factory=LightAugment)

    @classmethod
    def neutral(cls) -> "AugmentConfig":
        """Every operation disabled: all tiers become the identity."""
        return cls(
            strong=StrongAugment(hflip_p=0.0, vflip_p=0.0, crop_scale_range=(1.0, 1.0), jitter_std=0.0,
                                 rotation_choices=[0]),
            light=LightAugment(hflip_p=0.0, center_crop_fraction=1.0),
        )


def flip_halves(d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Complementary coordinate halves negated by the vector flips (fixed per dimensionality)."""
    order = np.random.default_rng(d).permutation(d)
    return np.sort(order[: d // 2]), np.sort(order[d // 2:])


def hflip_image(image: Tensor) -> Tensor:
    return image[:, ::-1]


def vflip_image(image: Tensor) -> Tensor:
    return image[::-1, :]


def _resize(image: Tensor, shape: Tuple[int, int]) -> Tensor:
    if image.shape == shape:
        return image
    zoom = (shape[0] / image.shape[0], shape[1] / image.shape[1])
    return np.clip(ndimage.zoom(image, zoom, order=1, mode="nearest", grid_mode=True), 0.0, 1.0)


def _crop_size(shape: Tuple[int, int], scale: float) -> Tuple[int, int]:
    side = np.sqrt(scale)
    return max(1, int(round(shape[0] * side))), max(1, int(round(shape[1] * side)))


def _strong_raster(image: Tensor, cfg: StrongAugment, rng: np.random.Generator) -> Tensor:
    shape = image.shape
    if rng.random() < cfg.hflip_p:
        image = hflip_image(image)
    if rng.random() < cfg.vflip_p:
        image = vflip_image(image)
    angle = int(rng.choice(cfg.rotation_choices))
    if angle:
        image = np.rot90(image, k=angle // 90)
    scale = rng.uniform(*cfg.crop_scale_range)
    height, width = _crop_size(shape, scale)
    if (height, width) != shape:
        top = int(rng.integers(0, shape[0] - height + 1))
        left = int(rng.integers(0, shape[1] - width + 1))
        image = _resize(image[top:top + height, left:left + width], shape)
    if cfg.jitter_std > 0.0:
        contrast = 1.0 + rng.normal(0.0, cfg.jitter_std)
        brightness = rng.normal(0.0, cfg.jitter_std)
        mean = image.mean()
        image = np.clip((image - mean) * contrast + mean + brightness, 0.0, 1.0)
    return np.ascontiguousarray(image)


def _light_raster(image: Tensor, cfg: LightAugment, rng: np.random.Generator) -> Tensor:
    shape = image.shape
    if rng.random() < cfg.hflip_p:
        image = hflip_image(image)
    height, width = _crop_size(shape, cfg.center_crop_fraction ** 2)
    if (height, width) != shape:
        top = (shape[0] - height) // 2
        left = (shape[1] - width) // 2
        image = _resize(image[top:top + height, left:left + width], shape)
    return np.ascontiguousarray(image)


def _strong_vector(row: Tensor, cfg: StrongAugment, halves, rng: np.random.Generator) -> Tensor:
    row = row.copy()
    if rng.random() < cfg.hflip_p:
        row[halves[0]] = -row[halves[0]]
    if rng.random() < cfg.vflip_p:
        row[halves[1]] = -row[halves[1]]
    scale = rng.uniform(*cfg.crop_scale_range)
    keep = max(1, int(round(scale * row.size)))
    if keep < row.size:
        dropped = rng.permutation(row.size)[keep:]
        row[dropped] = 0.0
    if cfg.jitter_std > 0.0:
        row = row + rng.normal(0.0, cfg.jitter_std, size=row.size)
    return row


def _light_vector(row: Tensor, cfg: LightAugment, halves, rng: np.random.Generator) -> Tensor:
    row = row.copy()
    if rng.random() < cfg.hflip_p:
        row[halves[0]] = -row[halves[0]]
    keep = max(1, int(round(cfg.center_crop_fraction * row.size)))
    if keep < row.size:
        start = (row.size - keep) // 2
        mask = np.zeros(row.size, dtype=bool)
        mask[start:start + keep] = True
        row[~mask] = 0.0
    return row


def augment(batch: Tensor, cfg: AugmentConfig, tier: AugmentTier, seed: int,
            image_shape: Optional[Tuple[int, int]] = None) -> Tensor:
    """Augment every row of ``batch`` [B, d] with the given tier; seeded and row-order preserving."""
    tier = AugmentTier(tier)
    batch = np.asarray(batch, dtype=np.float64)
    if tier == AugmentTier.NONE:
        return batch.copy()
    if image_shape is None and tier == AugmentTier.STRONG and any(cfg.strong.rotation_choices):
        raise ConfigError("rotation is a raster operation; vector data needs rotation_choices = [0]",
                          "augment.strong.rotation_choices")
    if image_shape is not None:
        height, width = image_shape
        if height * width != batch.shape[1]:
            raise ConfigError(f"image shape {image_shape} does not match row width {batch.shape[1]}", "augment")
        if height != width and any(angle in (90, 270) for angle in cfg.strong.rotation_choices):
            raise ConfigError("90/270 degree rotations need square images", "augment.strong.rotation_choices")

    rng = make_rng(seed, "augment", tier.value)
    out = np.empty_like(batch)
    if image_shape is not None:
        for i, row in enumerate(batch):
            image = row.reshape(image_shape)
            if tier == AugmentTier.STRONG:
                image = _strong_raster(image, cfg.strong, rng)
            else:
                image = _light_raster(image, cfg.light, rng)
            out[i] = image.ravel()
    else:
        halves = flip_halves(batch.shape[1])
        for i, row in enumerate(batch):
            if tier == AugmentTier.STRONG:
                out[i] = _strong_vector(row, cfg.strong, halves, rng)
            else:
                out[i] = _light_vector(row, cfg.light, halves, rng)
    return out
