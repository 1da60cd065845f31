import numpy as np
import pytest
from PIL import Image


def write_images(root, n, seed, size=96, black=False):
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        if black:
            arr = np.zeros((size, size, 3), dtype=np.uint8)
        else:
            arr = (rng.random((size, size, 3)) * 255).astype(np.uint8)
        path = root / f"img_{i:03d}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths


@pytest.fixture
def image_dir(tmp_path):
    write_images(tmp_path / "imgs", 3, seed=0)
    return tmp_path / "imgs"
