"""Seed-addressable image augmentations and the two-view pair sampler.

Every transform takes an `RngStream` address rather than a live generator:
the stream is hashed into a fresh generator on each call, so a transform is
a pure function of (image, address).  That makes batches reproducible no
matter which order (or thread) assembles them.

Strategies:
  none      identity
  re        random erasing — one noise-filled rectangle
  randcrop  random resized crop back to the input size
  raaug     1/3 identity, 1/3 random erasing, 1/3 random resized crop
  dfdc      corruption pipeline: quality drop, noise, blur, shift, scale
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .imgops import bilinear_resize, gaussian_blur, scale_about_center, shift_image
from .ndgrad import ContractError


class BoundsError(ValueError):
    """A rectangle or index falls outside the image."""


@dataclass(frozen=True)
class RngStream:
    """Counter-based RNG address: (seed, epoch, sample index, view index).

    Identical addresses always yield identical draw sequences; distinct
    addresses yield statistically independent streams (SeedSequence keys).
    """

    seed: int
    epoch: int = 0
    index: int = 0
    view: int = 0

    def __post_init__(self):
        for name in ("seed", "epoch", "index", "view"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise ContractError(f"RngStream.{name} must be a non-negative int, got {value!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.epoch), int(self.index), int(self.view))
        )
        return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, tag: str) -> int:
    """Stable sub-seed for one purpose (init, shuffle, augmentation, ...).

    SHA-256 of "seed:tag", not Python's hash(), so the value survives
    interpreter restarts and PYTHONHASHSEED.
    """
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ContractError(f"seed must be a non-negative int, got {seed!r}")
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1  # keep it a positive int64


@dataclass(frozen=True)
class EraseParams:
    area_range: tuple[float, float] = (0.02, 0.2)
    aspect_range: tuple[float, float] = (0.5, 2.0)
    max_attempts: int = 10


@dataclass(frozen=True)
class CropParams:
    area_range: tuple[float, float] = (1.0 / 1.3, 1.0)
    aspect_range: tuple[float, float] = (0.9, 1.1)
    max_attempts: int = 10


@dataclass(frozen=True)
class CorruptParams:
    stage_prob: float = 0.5
    quality_range: tuple[float, float] = (0.3, 1.0)
    noise_sigma_range: tuple[float, float] = (0.0, 0.1)
    blur_sigma_range: tuple[float, float] = (0.0, 2.0)
    shift_frac: float = 0.1
    scale_range: tuple[float, float] = (0.9, 1.1)


STRATEGY_KINDS = ("none", "re", "randcrop", "raaug", "dfdc")


@dataclass(frozen=True)
class AugStrategy:
    """Which augmentation to draw per view, plus its parameter records."""

    kind: str
    erase: EraseParams = field(default_factory=EraseParams)
    crop: CropParams = field(default_factory=CropParams)
    corrupt: CorruptParams = field(default_factory=CorruptParams)

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ContractError(
                f"unknown augmentation kind {self.kind!r}; expected one of {STRATEGY_KINDS}"
            )
        for pair in (
            self.erase.area_range,
            self.erase.aspect_range,
            self.crop.area_range,
            self.crop.aspect_range,
            self.corrupt.quality_range,
            self.corrupt.noise_sigma_range,
            self.corrupt.blur_sigma_range,
            self.corrupt.scale_range,
        ):
            if not pair[0] <= pair[1]:
                raise ContractError(f"range low must not exceed high, got {pair}")
        if not 0.0 <= self.corrupt.stage_prob <= 1.0:
            raise ContractError(f"stage_prob must lie in [0,1], got {self.corrupt.stage_prob}")


@dataclass(frozen=True)
class ViewPair:
    """Two augmented views of one source image; the label rides along unchanged."""

    x1: np.ndarray
    x2: np.ndarray
    label: int
    source_id: str = ""


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractError(f"expected an HxWx3 image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ContractError(f"image has empty dimensions: {img.shape}")
    return img


# -- random erasing ----------------------------------------------------------


def _sample_erase_rect(h, w, gen, params: EraseParams):
    """Draw (top, left, rh, rw) whose realized area fraction and aspect ratio
    land inside the configured ranges; None if every attempt misses.

    Rounding to whole pixels can push a sampled rectangle out of range, so
    the realized values are validated, not the draws.
    """
    lo_a, hi_a = params.area_range
    lo_r, hi_r = params.aspect_range
    for _ in range(params.max_attempts):
        frac = gen.uniform(lo_a, hi_a)
        ratio = math.exp(gen.uniform(math.log(lo_r), math.log(hi_r)))  # rh / rw
        target = frac * h * w
        rh = int(round(math.sqrt(target * ratio)))
        rw = int(round(math.sqrt(target / ratio)))
        if rh < 1 or rw < 1 or rh > h or rw > w:
            continue
        if not lo_a <= (rh * rw) / (h * w) <= hi_a:
            continue
        if not lo_r <= rh / rw <= hi_r:
            continue
        top = int(gen.integers(0, h - rh + 1))
        left = int(gen.integers(0, w - rw + 1))
        return top, left, rh, rw
    return None


def _erase_rect(img, rect, gen):
    top, left, rh, rw = rect
    out = img.copy()
    # one draw per pixel, broadcast across channels: the fill is gray noise,
    # so erasing never injects channel imbalance that could mimic (or drown)
    # the color trace the detector is supposed to key on
    out[top : top + rh, left : left + rw, :] = gen.uniform(0.0, 1.0, (rh, rw, 1))
    return out


def _random_erase_impl(img, gen, params: EraseParams):
    rect = _sample_erase_rect(img.shape[0], img.shape[1], gen, params)
    if rect is None:
        return img.copy()
    return _erase_rect(img, rect, gen)


def random_erase(img: np.ndarray, rng: RngStream, params: EraseParams | None = None) -> np.ndarray:
    """Fill one random rectangle with uniform noise; everything else is untouched."""
    img = _check_image(img)
    return _random_erase_impl(img, rng.generator(), params or EraseParams())


# -- random resized crop -------------------------------------------------------


def _sample_crop_rect(h, w, gen, params: CropParams):
    lo_a, hi_a = params.area_range
    lo_r, hi_r = params.aspect_range
    for _ in range(params.max_attempts):
        frac = gen.uniform(lo_a, hi_a)
        ratio = math.exp(gen.uniform(math.log(lo_r), math.log(hi_r)))  # ch / cw
        target = frac * h * w
        ch = int(round(math.sqrt(target * ratio)))
        cw = int(round(math.sqrt(target / ratio)))
        if ch < 1 or cw < 1 or ch > h or cw > w:
            continue
        if not lo_a <= (ch * cw) / (h * w) <= hi_a:
            continue
        if not lo_r <= ch / cw <= hi_r:
            continue
        top = int(gen.integers(0, h - ch + 1))
        left = int(gen.integers(0, w - cw + 1))
        return top, left, ch, cw
    return None


def _random_resized_crop_impl(img, gen, params: CropParams):
    h, w = img.shape[:2]
    rect = _sample_crop_rect(h, w, gen, params)
    if rect is None:
        return img.copy()
    top, left, ch, cw = rect
    crop = img[top : top + ch, left : left + cw]
    return np.clip(bilinear_resize(crop, h, w), 0.0, 1.0)


def random_resized_crop(
    img: np.ndarray, rng: RngStream, params: CropParams | None = None
) -> np.ndarray:
    """Crop a near-full-area rectangle and bilinearly resize it back."""
    img = _check_image(img)
    return _random_resized_crop_impl(img, rng.generator(), params or CropParams())


# -- composite strategies --------------------------------------------------------


def _ra_aug_impl(img, gen, erase: EraseParams, crop: CropParams):
    u = gen.random()
    if u < 1.0 / 3.0:
        return img.copy()
    if u < 2.0 / 3.0:
        return _random_erase_impl(img, gen, erase)
    return _random_resized_crop_impl(img, gen, crop)


def ra_aug(
    img: np.ndarray,
    rng: RngStream,
    erase: EraseParams | None = None,
    crop: CropParams | None = None,
) -> np.ndarray:
    """Uniformly one of: identity, random erasing, random resized crop."""
    img = _check_image(img)
    return _ra_aug_impl(img, rng.generator(), erase or EraseParams(), crop or CropParams())


def _dfdc_selim_impl(img, gen, params: CorruptParams):
    h, w = img.shape[:2]
    out = img
    p = params.stage_prob
    if gen.random() < p:
        # Quality drop: throw away detail by downscaling, then upscale back.
        q = gen.uniform(*params.quality_range)
        dh = max(1, int(round(h * q)))
        dw = max(1, int(round(w * q)))
        if (dh, dw) != (h, w):
            out = bilinear_resize(bilinear_resize(out, dh, dw), h, w)
    if gen.random() < p:
        sigma = gen.uniform(*params.noise_sigma_range)
        out = np.clip(out + gen.normal(0.0, sigma, out.shape), 0.0, 1.0)
    if gen.random() < p:
        sigma = gen.uniform(*params.blur_sigma_range)
        out = gaussian_blur(out, sigma)
    if gen.random() < p:
        max_dy = int(math.floor(h * params.shift_frac))
        max_dx = int(math.floor(w * params.shift_frac))
        dy = int(gen.integers(-max_dy, max_dy + 1))
        dx = int(gen.integers(-max_dx, max_dx + 1))
        out = shift_image(out, dy, dx)
    if gen.random() < p:
        factor = gen.uniform(*params.scale_range)
        out = scale_about_center(out, factor)
    return np.clip(out, 0.0, 1.0)


def dfdc_selim(
    img: np.ndarray, rng: RngStream, params: CorruptParams | None = None
) -> np.ndarray:
    """Corruption pipeline; each stage fires independently, in a fixed order."""
    img = _check_image(img)
    return _dfdc_selim_impl(img, rng.generator(), params or CorruptParams())


def apply_augment(img: np.ndarray, strategy: AugStrategy, rng: RngStream) -> np.ndarray:
    """Run the strategy's transform for this rng address."""
    img = _check_image(img)
    gen = rng.generator()
    if strategy.kind == "none":
        return img.copy()
    if strategy.kind == "re":
        return _random_erase_impl(img, gen, strategy.erase)
    if strategy.kind == "randcrop":
        return _random_resized_crop_impl(img, gen, strategy.crop)
    if strategy.kind == "raaug":
        return _ra_aug_impl(img, gen, strategy.erase, strategy.crop)
    if strategy.kind == "dfdc":
        return _dfdc_selim_impl(img, gen, strategy.corrupt)
    raise ContractError(f"unknown augmentation kind {strategy.kind!r}")


def make_pair(
    img: np.ndarray,
    label: int,
    strategy: AugStrategy,
    rng1: RngStream,
    rng2: RngStream,
    source_id: str = "",
) -> ViewPair:
    """Draw the two views for one sample; the label is copied, never derived."""
    x1 = apply_augment(img, strategy, rng1)
    x2 = apply_augment(img, strategy, rng2)
    return ViewPair(x1=x1, x2=x2, label=int(label), source_id=source_id)


def crop_enlarged(
    img: np.ndarray, bbox: tuple[int, int, int, int], factor: float, out_size: int = 64
) -> np.ndarray:
    """Enlarge a (top, left, height, width) box about its center, crop, resize.

    The enlarged box is clipped to the image, so near-border boxes shrink
    rather than fail; only the original box must lie inside the image.
    """
    img = _check_image(img)
    h, w = img.shape[:2]
    top, left, bh, bw = (int(v) for v in bbox)
    if bh < 1 or bw < 1 or top < 0 or left < 0 or top + bh > h or left + bw > w:
        raise BoundsError(f"bbox {bbox} does not fit inside a {h}x{w} image")
    if factor < 1.0:
        raise ContractError(f"enlargement factor must be >= 1, got {factor}")
    cy = top + bh / 2.0
    cx = left + bw / 2.0
    nh = int(round(bh * factor))
    nw = int(round(bw * factor))
    t2 = max(int(math.floor(cy - nh / 2.0)), 0)
    l2 = max(int(math.floor(cx - nw / 2.0)), 0)
    b2 = min(t2 + nh, h)
    r2 = min(l2 + nw, w)
    crop = img[t2:b2, l2:r2]
    return np.clip(bilinear_resize(crop, out_size, out_size), 0.0, 1.0)
