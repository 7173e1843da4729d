import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """Three decodable images with distinct content."""
    root = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(0)
    for i in range(3):
        arr = rng.integers(0, 255, size=(96, 96, 3), dtype=np.uint8)
        arr[:, : 32 * (i + 1)] = (30 * (i + 1), 80, 200 - 40 * i)
        Image.fromarray(arr, "RGB").save(root / f"img_{i}.png")
    return root
