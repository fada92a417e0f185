"""Dataset discovery, weak labeling, and resolution standardization.

A dataset on disk is a root directory holding images plus one annotation mask
per image (``<stem><mask_suffix><ext>``). The mask is consumed only to derive
an image-level label: any nonzero pixel makes the sample positive. Pixel-level
annotations never travel past this point, so everything downstream is weakly
supervised by construction.

Preprocessing crops the largest centered region matching the target aspect
ratio and bilinearly resizes it to the target resolution. Inputs much wider
than the target aspect lose their lateral margins; keep source aspect close to
the target when that content matters.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import IngestError
from .imgio import file_digest, read_image, read_mask
from .manifest import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    SOURCE_ORIGINAL,
    SPLIT_TEST,
    SPLIT_TRAIN,
    DatasetManifest,
    ManifestEntry,
)


@dataclass(frozen=True)
class LayoutSpec:
    """Declarative description of how images, masks, and splits sit on disk."""

    image_glob: str = "*/*.png"
    mask_suffix: str = "_GT"
    split_dirs: dict = field(default_factory=lambda: {"train": SPLIT_TRAIN, "test": SPLIT_TEST})

    @classmethod
    def surface_defect(cls) -> "LayoutSpec":
        """Layout used by the KSDD2 surface-defect release."""
        return cls()


def preprocess(pixels: np.ndarray, target_resolution) -> np.ndarray:
    """Center-crop to the target aspect ratio, then bilinearly resize.

    ``target_resolution`` is (width, height). Returns float32 (th, tw, 3).
    Images already at the target resolution pass through untouched.
    """
    tw, th = int(target_resolution[0]), int(target_resolution[1])
    h, w = pixels.shape[:2]
    if (w, h) == (tw, th):
        return pixels
    # Largest centered crop with aspect tw:th that fits inside (w, h).
    if w * th > h * tw:
        crop_h = h
        crop_w = min(w, max(1, round(h * tw / th)))
    else:
        crop_w = w
        crop_h = min(h, max(1, round(w * th / tw)))
    x0 = (w - crop_w) // 2
    y0 = (h - crop_h) // 2
    crop = pixels[y0 : y0 + crop_h, x0 : x0 + crop_w]
    if (crop_w, crop_h) == (tw, th):
        return np.ascontiguousarray(crop)
    out = cv2.resize(crop, (tw, th), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _image_size(path: Path):
    try:
        with Image.open(path) as im:
            return im.size  # (width, height)
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot decode image file {path}: {exc}") from exc


def _ingest_one(root: Path, rel: Path, mask_suffix: str, split: str) -> ManifestEntry:
    image_path = root / rel
    mask_path = image_path.with_name(rel.stem + mask_suffix + rel.suffix)
    if not mask_path.is_file():
        raise IngestError(f"missing annotation mask for {image_path} (expected {mask_path})")
    w, h = _image_size(image_path)
    mask = read_mask(mask_path)
    if mask.shape != (h, w):
        raise IngestError(
            f"mask shape {mask.shape[::-1]} does not match image size {(w, h)} for {image_path}"
        )
    label = LABEL_POSITIVE if mask.any() else LABEL_NEGATIVE
    return ManifestEntry(
        sample_id=rel.with_suffix("").as_posix(),
        path=rel.as_posix(),
        label=label,
        source=SOURCE_ORIGINAL,
        split=split,
        digest=file_digest(image_path),
    )


def load_dataset(root, layout: LayoutSpec, target_resolution, workers: int = 0) -> DatasetManifest:
    """Scan ``root`` per ``layout`` and assemble a labeled manifest.

    Decoding may run on a thread pool (``workers`` > 1); the resulting entry
    order is sorted by (split, path) regardless, so the manifest content hash
    is independent of scheduling.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"dataset root {root} is not a directory")
    jobs = []
    for p in sorted(root.glob(layout.image_glob)):
        rel = p.relative_to(root)
        if rel.stem.endswith(layout.mask_suffix):
            continue
        split = layout.split_dirs.get(rel.parts[0]) if len(rel.parts) > 1 else None
        if split is None:
            continue
        jobs.append((rel, split))
    if not jobs:
        raise IngestError(f"dataset root {root} contains zero samples for layout {layout}")
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(
                pool.map(lambda j: _ingest_one(root, j[0], layout.mask_suffix, j[1]), jobs)
            )
    else:
        entries = [_ingest_one(root, rel, layout.mask_suffix, split) for rel, split in jobs]
    entries.sort(key=lambda e: (e.split, e.path))
    return DatasetManifest.build(root=root, target_resolution=target_resolution, entries=entries)


def load_entry_pixels(manifest: DatasetManifest, entry: ManifestEntry) -> np.ndarray:
    """Read an entry's image and standardize it to the manifest resolution."""
    return preprocess(read_image(manifest.entry_path(entry)), manifest.target_resolution)
