import os

import numpy as np
import pytest

from src.components.synthetic_data import SyntheticData, synth_generate
from src.data_access.image_io import save_ppm
from src.entity.config_entity import SynthSpec, TrainConfig
from src.entity.op_dictionary import default_registry


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_domains():
    """32 labelled 16x16 images per domain; target = invert(grayscale(source)) + noise."""
    return synth_generate(SynthSpec(image_size=16, num_images=32, num_classes=2), seed=3)


@pytest.fixture
def small_config():
    return TrainConfig(k=2, steps=6, batch_size=4, projections=8, log_every=2, seed=11)


@pytest.fixture
def synth_dirs(tmp_path):
    """Exported synthetic dataset folders: (source_dir, target_dir)."""
    spec = SynthSpec(image_size=16, num_images=16, num_classes=2)
    SyntheticData(spec, seed=5, output_dir=str(tmp_path / "data")).initiate_synthetic_data()
    return str(tmp_path / "data" / "source"), str(tmp_path / "data" / "target")


def write_images(directory, images, names=None):
    """Writes (3, H, W) arrays as PPM files and returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, image in enumerate(images):
        path = os.path.join(str(directory), names[i] if names else f"img_{i:03d}.ppm")
        save_ppm(image, path)
        paths.append(path)
    return paths
