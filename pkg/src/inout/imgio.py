"""Image file IO and digest helpers.

All in-memory images are ``float32`` arrays shaped (H, W, 3) with values in
[0, 1]. Files on disk are 8-bit PNGs, so quantization happens exactly once at
the write boundary.
"""

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestError


def read_image(path) -> np.ndarray:
    """Decode an image file to float32 (H, W, 3) in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot decode image file {path}: {exc}") from exc
    return arr / 255.0


def read_mask(path) -> np.ndarray:
    """Decode an annotation mask to a 2-D uint8 array (0 = background)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot decode mask file {path}: {exc}") from exc
    return arr


def write_image(path, pixels: np.ndarray) -> None:
    """Quantize float32 [0, 1] pixels to 8-bit and write a PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.asarray(pixels, dtype=np.float32), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def write_mask(path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(np.asarray(mask) != 0, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def array_digest(arr: np.ndarray) -> str:
    """Digest of an array's dtype, shape, and contents."""
    a = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(a.dtype).encode())
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()
