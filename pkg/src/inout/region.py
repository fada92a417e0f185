"""Out-of-distribution positives from noise regions.

A train negative is turned into a synthetic positive in three steps: standard
photometric/geometric transforms on the base image, a lattice-gradient noise
mask thresholded to a target coverage band, and superimposition of a textured
noise patch inside the mask. Pixels outside the mask keep their exact values.

Everything is deterministic given (spec, image dims, seed): retries draw
derived sub-seeds, never shared RNG state.
"""

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import MaskGenerationError, ValidationError
from .seeding import derive_seed

# Noise-value cutoff giving ~5% expected mask coverage at the default grid
# periods (calibrated over 800 fields each at 32x96, 64x192, and 200x600).
DEFAULT_THRESHOLD = 0.50


@dataclass(frozen=True)
class PerlinMaskSpec:
    """Controls mask sampling.

    ``grid_period_range`` bounds the lattice periods drawn per axis; the longer
    image axis has its period scaled by the aspect ratio so lattice cells stay
    near-square on strip-shaped images. A sampled mask whose coverage fraction
    falls outside ``coverage_bounds`` (inclusive) is resampled with a derived
    sub-seed, at most ``max_retries`` extra times.
    """

    grid_period_range: tuple = (2, 6)
    threshold: float = DEFAULT_THRESHOLD
    coverage_bounds: tuple = (0.005, 0.25)
    max_retries: int = 10

    def validate(self) -> None:
        lo, hi = self.grid_period_range
        if not (1 <= lo <= hi):
            raise ValidationError(f"bad grid_period_range {self.grid_period_range}")
        cmin, cmax = self.coverage_bounds
        if not (0.0 <= cmin <= cmax <= 1.0):
            raise ValidationError(f"bad coverage_bounds {self.coverage_bounds}")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


@dataclass(frozen=True)
class TransformSpec:
    """Standard augmentation ranges applied to the base image.

    Scalar intervals; a stage whose drawn parameter equals its identity value
    is skipped outright, so an all-identity spec returns the input unchanged.
    """

    mirror_prob: float = 0.5
    rotation_degrees: tuple = (-5.0, 5.0)
    brightness_range: tuple = (0.9, 1.1)
    saturation_range: tuple = (0.9, 1.1)
    hue_shift_range: tuple = (-0.03, 0.03)

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls(
            mirror_prob=0.0,
            rotation_degrees=(0.0, 0.0),
            brightness_range=(1.0, 1.0),
            saturation_range=(1.0, 1.0),
            hue_shift_range=(0.0, 0.0),
        )


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin_field(width: int, height: int, period_x: int, period_y: int, rng) -> np.ndarray:
    """Gradient lattice noise over an arbitrary (not necessarily divisible) grid.

    Returns float32 (height, width), values roughly in [-1, 1].
    """
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(period_y + 1, period_x + 1))
    grads = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    xs = (np.arange(width, dtype=np.float64) + 0.5) * (period_x / width)
    ys = (np.arange(height, dtype=np.float64) + 0.5) * (period_y / height)
    xi = np.minimum(np.floor(xs).astype(int), period_x - 1)
    yi = np.minimum(np.floor(ys).astype(int), period_y - 1)
    xf, yf = np.meshgrid(xs - xi, ys - yi)
    xi, yi = np.meshgrid(xi, yi)
    g00 = grads[yi, xi]
    g10 = grads[yi, xi + 1]
    g01 = grads[yi + 1, xi]
    g11 = grads[yi + 1, xi + 1]
    n00 = g00[..., 0] * xf + g00[..., 1] * yf
    n10 = g10[..., 0] * (xf - 1.0) + g10[..., 1] * yf
    n01 = g01[..., 0] * xf + g01[..., 1] * (yf - 1.0)
    n11 = g11[..., 0] * (xf - 1.0) + g11[..., 1] * (yf - 1.0)
    u = _fade(xf)
    v = _fade(yf)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return (np.sqrt(2.0) * (nx0 + v * (nx1 - nx0))).astype(np.float32)


def _draw_periods(width: int, height: int, spec: PerlinMaskSpec, rng):
    lo, hi = spec.grid_period_range
    px = int(rng.integers(lo, hi + 1))
    py = int(rng.integers(lo, hi + 1))
    # Keep lattice cells near-square on strips by stretching the long axis.
    if height >= width:
        py *= max(1, round(height / width))
    else:
        px *= max(1, round(width / height))
    return px, py


def sample_mask(spec: PerlinMaskSpec, width: int, height: int, seed: int) -> np.ndarray:
    """Threshold a noise field into a boolean mask within the coverage band.

    Deterministic per (spec, dims, seed). Raises ``MaskGenerationError`` with
    the last observed coverage once retries are exhausted.
    """
    spec.validate()
    if width <= 0 or height <= 0:
        raise ValidationError(f"mask dims must be positive, got {(width, height)}")
    cmin, cmax = spec.coverage_bounds
    coverage = None
    for attempt in range(spec.max_retries + 1):
        sub = seed if attempt == 0 else derive_seed(seed, "mask-retry", attempt)
        rng = np.random.default_rng(sub)
        px, py = _draw_periods(width, height, spec, rng)
        field = perlin_field(width, height, px, py, rng)
        mask = field > spec.threshold
        coverage = float(np.count_nonzero(mask)) / mask.size
        if cmin <= coverage <= cmax:
            return mask
    raise MaskGenerationError(
        f"no mask within coverage bounds [{cmin}, {cmax}] after "
        f"{spec.max_retries + 1} attempts (last coverage {coverage:.4f})"
    )


def superimpose(image: np.ndarray, noise: np.ndarray, mask: np.ndarray, beta: float) -> np.ndarray:
    """Blend ``noise`` over ``image`` inside ``mask``: out = (1-beta)*img + beta*noise.

    Off-mask pixels are returned bit-identical. ``beta`` must lie in (0, 1]
    and the mask must select at least one pixel.
    """
    image = np.asarray(image, dtype=np.float32)
    noise = np.asarray(noise, dtype=np.float32)
    mask = np.asarray(mask, dtype=bool)
    if image.shape != noise.shape or image.shape[:2] != mask.shape:
        raise ValidationError(
            f"dimension mismatch: image {image.shape}, noise {noise.shape}, mask {mask.shape}"
        )
    if not (0.0 < beta <= 1.0):
        raise ValidationError(f"beta must be in (0, 1], got {beta}")
    if not mask.any():
        raise ValidationError("mask selects zero pixels")
    blended = (1.0 - np.float32(beta)) * image + np.float32(beta) * noise
    return np.where(mask[..., None], blended, image)


def value_noise_texture(width: int, height: int, seed: int) -> np.ndarray:
    """Smooth two-octave value-noise patch, float32 (height, width, 3) in [0, 1]."""
    rng = np.random.default_rng(seed)
    out = np.zeros((height, width), dtype=np.float32)
    total = 0.0
    for cells, weight in (((4, 4), 0.65), ((11, 11), 0.35)):
        cw = max(2, min(cells[0], width))
        ch = max(2, min(cells[1], height))
        coarse = rng.uniform(0.0, 1.0, size=(ch, cw)).astype(np.float32)
        out += weight * cv2.resize(coarse, (width, height), interpolation=cv2.INTER_LINEAR)
        total += weight
    out = np.clip(out / total, 0.0, 1.0)
    return np.repeat(out[..., None], 3, axis=2)


def _jitter_colors(image, brightness, saturation, hue_shift):
    hsv = cv2.cvtColor(image, cv2.COLOR_RGB2HSV)
    hsv[..., 0] = np.mod(hsv[..., 0] + hue_shift * 360.0, 360.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * brightness, 0.0, 1.0)
    return np.clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB), 0.0, 1.0)


def apply_standard_transforms(image: np.ndarray, spec: TransformSpec, rng) -> np.ndarray:
    """Mirror, small rotation, and brightness/saturation/hue jitter.

    All parameters are drawn up front in a fixed order, so the stream of
    random draws does not depend on which stages end up as identities.
    """
    image = np.asarray(image, dtype=np.float32)
    do_mirror = bool(rng.random() < spec.mirror_prob)
    angle = float(rng.uniform(*spec.rotation_degrees))
    brightness = float(rng.uniform(*spec.brightness_range))
    saturation = float(rng.uniform(*spec.saturation_range))
    hue_shift = float(rng.uniform(*spec.hue_shift_range))

    out = image
    if do_mirror:
        out = out[:, ::-1].copy()
    if angle != 0.0:
        h, w = out.shape[:2]
        m = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
        out = cv2.warpAffine(
            out, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
        )
        out = np.clip(out, 0.0, 1.0)
    if brightness != 1.0 or saturation != 1.0 or hue_shift != 0.0:
        out = _jitter_colors(out, brightness, saturation, hue_shift)
    return np.ascontiguousarray(out, dtype=np.float32)


def augment_negative(
    image: np.ndarray,
    mask_spec: PerlinMaskSpec,
    transform_spec: TransformSpec,
    seed: int,
    beta_range: tuple = (0.5, 1.0),
    noise_source=value_noise_texture,
):
    """Produce one synthetic positive from a negative image.

    Returns (pixels, mask, beta). The transforms apply to the base image before
    superimposition, so the off-mask region equals the transformed base exactly.
    """
    image = np.asarray(image, dtype=np.float32)
    h, w = image.shape[:2]
    base = apply_standard_transforms(
        image, transform_spec, np.random.default_rng(derive_seed(seed, "transform"))
    )
    mask = sample_mask(mask_spec, w, h, derive_seed(seed, "mask"))
    noise = noise_source(w, h, derive_seed(seed, "noise"))
    blend_rng = np.random.default_rng(derive_seed(seed, "beta"))
    beta = float(blend_rng.uniform(beta_range[0], beta_range[1]))
    return superimpose(base, noise, mask, beta), mask, beta
