"""
Hand-crafted baseline stylizers and the stylized/real batch mixer.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.autodiff import functional as F
from src.constants import TRAINER_MIX_RATIO
from src.entity.dataset_entity import DomainBatch, ImageRecord
from src.exception import ParameterRangeError, PoolExhaustedError, UsageError
from src.logger import logging

BASELINE_KINDS: Tuple[str, ...] = ("identity", "grayscale", "grayscale-invert")


def baseline_array(kind: str, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if kind == "identity":
        return image
    if kind == "grayscale":
        return F.channel_mean_array(image)
    if kind == "grayscale-invert":
        return (1.0 - F.channel_mean_array(image)).astype(np.float32)
    raise UsageError(f"unknown baseline kind {kind!r}", kind=kind, known=list(BASELINE_KINDS))


def baseline_stylize(kind: str, record: ImageRecord) -> ImageRecord:
    return ImageRecord(baseline_array(kind, record.image), record.label, record.source_path)


@dataclass(eq=False)
class MixedBatch(DomainBatch):
    stylized_mask: Optional[np.ndarray] = None
    pool_indices: Optional[np.ndarray] = None

    @property
    def num_stylized(self) -> int:
        return int(np.sum(self.stylized_mask))


def mix_batches(stylized: DomainBatch, real: DomainBatch,
                ratio: Tuple[int, int] = TRAINER_MIX_RATIO,
                rng: Optional[np.random.Generator] = None) -> List[MixedBatch]:
    """
    One epoch of batches holding exactly ``ratio[0]`` stylized and ``ratio[1]``
    real images at shuffled positions. Records left over once a pool cannot
    fill another batch are dropped.
    """
    s, r = int(ratio[0]), int(ratio[1])
    if s < 0 or r < 0 or s + r < 1:
        raise ParameterRangeError(f"invalid mix ratio {ratio}", ratio=list(ratio))
    rng = rng or np.random.default_rng(0)
    counts = []
    for name, pool, need in (("stylized", stylized, s), ("real", real, r)):
        if need == 0:
            continue
        if pool.size < need:
            raise PoolExhaustedError(f"the {name} pool holds {pool.size} images, a batch needs {need}",
                                     pool=name, available=pool.size, needed=need)
        counts.append(pool.size // need)
    num_batches = min(counts)

    stylized_order = rng.permutation(stylized.size)
    real_order = rng.permutation(real.size)
    images_s, images_r = np.asarray(stylized.images), np.asarray(real.images)
    with_labels = stylized.labels is not None and real.labels is not None

    batches = []
    for b in range(num_batches):
        take_s = stylized_order[b * s:(b + 1) * s]
        take_r = real_order[b * r:(b + 1) * r]
        positions = rng.permutation(s + r)
        images = np.concatenate([images_s[take_s], images_r[take_r]])[positions]
        mask = np.concatenate([np.ones(s, dtype=bool), np.zeros(r, dtype=bool)])[positions]
        indices = np.concatenate([take_s, take_r])[positions]
        labels = (np.concatenate([stylized.labels[take_s], real.labels[take_r]])[positions]
                  if with_labels else None)
        batches.append(MixedBatch(images, labels, mask, indices))
    logging.debug(f"Mixed {num_batches} batches at ratio {s}:{r}")
    return batches
