import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))


def write_rgb(path, arr):
    """Write a uint8 (H, W, 3) array as PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(path)


def write_gray(path, arr):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


@pytest.fixture
def tiny_dataset(tmp_path):
    """Three-sample dataset: 2 train (1 pos, 1 neg), 1 test neg. 24x72 images."""
    rng = np.random.default_rng(7)
    root = tmp_path / "data"
    specs = [
        ("train/000.png", False),
        ("train/001.png", True),
        ("test/100.png", False),
    ]
    for rel, positive in specs:
        img = rng.integers(0, 256, size=(72, 24, 3))
        write_rgb(root / rel, img)
        mask = np.zeros((72, 24), dtype=np.uint8)
        if positive:
            mask[10:14, 5:9] = 255
        write_gray(root / rel.replace(".png", "_GT.png"), mask)
    return root
