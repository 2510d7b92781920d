"""
Procedural two-domain data with a known hidden stylization.

Source scenes are a near-uniform background with one coloured class shape.
Target scenes are an independent draw of the same process passed through the
hidden policy (op name, physical parameter) with ``apply_hard`` plus clamped
Gaussian pixel noise.
"""
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.constants import SYNTH_MANIFEST_FILE_NAME
from src.data_access.image_io import save_ppm
from src.entity.config_entity import SynthSpec
from src.entity.dataset_entity import DomainDataset, DomainTag, ImageRecord
from src.entity.op_dictionary import OpRegistry, apply_hard, default_registry, param_unmap
from src.exception import MyException, OutputCollisionError, ParameterRangeError
from src.logger import logging
from src.utils.main_utils import write_json_file

SHAPES: Tuple[str, ...] = ("disk", "square", "triangle", "ring")
BASE_COLORS = np.array([
    [0.95, 0.45, 0.30],
    [0.25, 0.45, 0.80],
    [0.35, 0.80, 0.35],
    [0.80, 0.75, 0.25],
], dtype=np.float64)
# Per-class brightness, so classes also differ after grayscale
BASE_INTENSITY = (1.0, 0.55, 0.8, 0.4)
BACKGROUND_RANGE = (0.2, 0.3)


def class_name(label: int) -> str:
    return f"{SHAPES[label % len(SHAPES)]}{label // len(SHAPES) or ''}"


def _shape_mask(kind: str, size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dy, dx = yy - cy, xx - cx
    if kind == "disk":
        return dy ** 2 + dx ** 2 <= radius ** 2
    if kind == "square":
        return (np.abs(dy) <= radius * 0.85) & (np.abs(dx) <= radius * 0.85)
    if kind == "triangle":
        return (dy <= radius * 0.7) & (dy >= -radius) & (np.abs(dx) <= (dy + radius) * 0.6)
    return (dy ** 2 + dx ** 2 <= radius ** 2) & (dy ** 2 + dx ** 2 >= (radius * 0.55) ** 2)


def render_scene(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One (3, size, size) float32 scene of class ``label``."""
    background = rng.uniform(*BACKGROUND_RANGE) + rng.uniform(-0.02, 0.02, size=3)
    image = np.broadcast_to(background[:, None, None], (3, size, size)).copy()
    radius = rng.uniform(size / 10, size / 6)
    cy, cx = rng.uniform(radius, size - radius, size=2)
    mask = _shape_mask(SHAPES[label % len(SHAPES)], size, cy, cx, radius)
    color = BASE_COLORS[label % len(BASE_COLORS)] * BASE_INTENSITY[label % len(BASE_INTENSITY)]
    color = np.clip(color + rng.uniform(-0.04, 0.04, size=3), 0.0, 1.0)
    image[:, mask] = color[:, None]
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def apply_hidden_policy(image: np.ndarray, hidden_policy: Sequence[Tuple[str, Optional[float]]],
                        registry: Optional[OpRegistry] = None) -> np.ndarray:
    registry = registry or default_registry()
    x = image
    for name, physical in hidden_policy:
        op = registry.descriptor(name)
        mu01 = None
        if op.has_param:
            if physical is None:
                raise ParameterRangeError(f"hidden policy op {name} needs a physical parameter", op=name)
            mu01 = param_unmap(op, physical)
        x = apply_hard(op.op_id, x, mu01, registry).numpy()
    return x


def synth_generate(spec: SynthSpec, seed: int,
                   registry: Optional[OpRegistry] = None) -> Tuple[DomainDataset, DomainDataset]:
    registry = registry or default_registry()
    for name, _ in spec.hidden_policy:
        registry.descriptor(name)

    source_seq, target_seq, noise_seq = np.random.SeedSequence(seed).spawn(3)
    source_rng = np.random.default_rng(source_seq)
    target_rng = np.random.default_rng(target_seq)
    noise_rng = np.random.default_rng(noise_seq)
    names = tuple(class_name(c) for c in range(spec.num_classes))

    source: List[ImageRecord] = []
    target: List[ImageRecord] = []
    for i in range(spec.num_images):
        label = i % spec.num_classes
        source.append(ImageRecord(render_scene(label, spec.image_size, source_rng), label,
                                  f"{names[label]}/source_{i:05d}.ppm"))
        scene = apply_hidden_policy(render_scene(label, spec.image_size, target_rng), spec.hidden_policy, registry)
        if spec.noise_sigma > 0:
            scene = scene + noise_rng.normal(0.0, spec.noise_sigma, size=scene.shape)
        target.append(ImageRecord(np.clip(scene, 0.0, 1.0).astype(np.float32), label,
                                  f"{names[label]}/target_{i:05d}.ppm"))
    logging.info(f"Generated {spec.num_images} synthetic images per domain with hidden policy {spec.hidden_policy}")
    return (DomainDataset(source, DomainTag.SOURCE, names),
            DomainDataset(target, DomainTag.TARGET, names))


class SyntheticData:
    def __init__(self, spec: SynthSpec, seed: int, output_dir: str):
        """
        :param spec: SynthSpec
        :param seed: generator seed
        :param output_dir: receives source/ and target/ class folders plus the manifest
        """
        try:
            self.spec = spec
            self.seed = seed
            self.output_dir = output_dir
        except Exception as e:
            raise MyException(e, sys)

    def export(self, source: DomainDataset, target: DomainDataset) -> str:
        manifest_path = os.path.join(self.output_dir, SYNTH_MANIFEST_FILE_NAME)
        if os.path.exists(manifest_path):
            raise OutputCollisionError(f"{self.output_dir} already holds a synthetic dataset",
                                       path=self.output_dir)
        records = []
        for domain, dataset in (("source", source), ("target", target)):
            for record in dataset.records:
                relative = os.path.join(domain, record.source_path)
                path = os.path.join(self.output_dir, relative)
                os.makedirs(os.path.dirname(path), exist_ok=True)
                save_ppm(record, path)
                records.append({"domain": domain, "path": relative.replace(os.sep, "/"), "label": record.label})
        write_json_file(manifest_path, {
            "seed": self.seed,
            "spec": self.spec.to_dict(),
            "class_names": list(source.class_names),
            "hidden_policy": [[name, value] for name, value in self.spec.hidden_policy],
            "records": records,
        })
        return manifest_path

    def initiate_synthetic_data(self) -> Tuple[DomainDataset, DomainDataset, str]:
        try:
            logging.info("Starting synthetic data generation")
            source, target = synth_generate(self.spec, self.seed)
            manifest_path = self.export(source, target)
            logging.info(f"Synthetic datasets written to {self.output_dir}")
            return source, target, manifest_path
        except Exception as e:
            raise MyException(e, sys) from e
