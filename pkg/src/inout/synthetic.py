"""Procedural striped-texture dataset at desk scale.

Negatives are clean sinusoidal stripe patterns with mild per-sample frequency
and phase variation; positives carry a small elongated blemish that locally
breaks the stripes, with the blemish support written out as the annotation
mask. The generated tree matches the standard layout (``train/``/``test``
directories, ``_GT`` mask suffix), so it flows through the regular ingest
path.
"""

from pathlib import Path

import numpy as np

from .imgio import write_image, write_mask
from .seeding import derive_seed


def striped_texture(width: int, height: int, rng) -> np.ndarray:
    """One clean texture, float32 (height, width, 3) in [0, 1]."""
    period = rng.uniform(6.0, 11.0)
    phase = rng.uniform(0.0, 1.0)
    tilt = rng.uniform(-0.15, 0.15)
    xs = np.arange(width, dtype=np.float32)[None, :]
    ys = np.arange(height, dtype=np.float32)[:, None]
    wave = 0.5 + 0.22 * np.sin(2.0 * np.pi * ((xs + tilt * ys) / period + phase))
    tex = wave + rng.normal(0.0, 0.02, size=(height, width))
    tex = np.clip(tex, 0.0, 1.0).astype(np.float32)
    return np.repeat(tex[..., None], 3, axis=2)


def inject_blemish(image: np.ndarray, rng) -> tuple:
    """Stamp one elongated blemish; returns (image, mask) with mask uint8."""
    h, w = image.shape[:2]
    out = image.copy()
    mask = np.zeros((h, w), dtype=np.uint8)
    cx = rng.uniform(0.2 * w, 0.8 * w)
    cy = rng.uniform(0.15 * h, 0.85 * h)
    length = rng.uniform(0.18, 0.38) * min(h, 2 * w)
    thickness = rng.uniform(1.2, 2.8)
    angle = rng.uniform(0.0, np.pi)
    delta = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 0.5)
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs - cx
    dy = ys - cy
    along = dx * np.cos(angle) + dy * np.sin(angle)
    across = -dx * np.sin(angle) + dy * np.cos(angle)
    support = (np.abs(along) <= length / 2.0) & (np.abs(across) <= thickness)
    falloff = np.exp(-(across**2) / (2.0 * thickness**2))
    out += (delta * falloff * support)[..., None]
    np.clip(out, 0.0, 1.0, out=out)
    mask[support] = 255
    return out.astype(np.float32), mask


def toy_texture_images(count: int, width: int, height: int, seed: int) -> list:
    """Clean textures only, for fine-tune smoke runs."""
    return [
        striped_texture(width, height, np.random.default_rng(derive_seed(seed, "tex", i)))
        for i in range(count)
    ]


def make_toy_dataset(
    root,
    train_negatives: int = 480,
    train_positives: int = 5,
    test_negatives: int = 120,
    test_positives: int = 60,
    width: int = 32,
    height: int = 96,
    seed: int = 0,
) -> Path:
    """Write the dataset tree under ``root`` and return it."""
    root = Path(root)
    plan = [
        ("train", False, train_negatives),
        ("train", True, train_positives),
        ("test", False, test_negatives),
        ("test", True, test_positives),
    ]
    counter = 0
    for split, positive, count in plan:
        for _ in range(count):
            rng = np.random.default_rng(derive_seed(seed, "toy", split, counter))
            image = striped_texture(width, height, rng)
            if positive:
                image, mask = inject_blemish(image, rng)
            else:
                mask = np.zeros((height, width), dtype=np.uint8)
            stem = f"{counter:05d}"
            write_image(root / split / f"{stem}.png", image)
            write_mask(root / split / f"{stem}_GT.png", mask)
            counter += 1
    return root
