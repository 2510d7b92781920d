from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff import Tensor
from src.exception import DataError, ShapeMismatchError


class DomainTag(str, Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(eq=False)
class ImageRecord:
    image: np.ndarray
    label: Optional[int] = None
    source_path: str = ""

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float32)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ShapeMismatchError(f"{self.source_path or 'image'}: expected (3, H, W), got {self.image.shape}",
                                     path=self.source_path, shapes=[list(self.image.shape)])
        if np.any(self.image < 0) or np.any(self.image > 1):
            raise DataError(f"{self.source_path or 'image'}: pixel values outside [0, 1]", path=self.source_path)

    @property
    def name(self) -> str:
        return self.source_path.replace("\\", "/").rsplit("/", 1)[-1]


@dataclass(eq=False)
class DomainDataset:
    records: List[ImageRecord]
    domain_tag: DomainTag = DomainTag.SOURCE
    class_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.domain_tag = DomainTag(self.domain_tag)
        self.class_names = tuple(self.class_names)
        for record in self.records:
            if record.label is not None and not 0 <= record.label < len(self.class_names):
                raise DataError(f"{record.source_path}: label {record.label} outside "
                                f"{len(self.class_names)} classes", path=record.source_path, label=record.label)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labeled(self) -> bool:
        return bool(self.records) and all(r.label is not None for r in self.records)

    @property
    def image_shape(self) -> Tuple[int, ...]:
        return self.records[0].image.shape

    def images(self, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        chosen = self.records if indices is None else [self.records[i] for i in indices]
        return np.stack([r.image for r in chosen]).astype(np.float32)

    def labels(self, indices: Optional[Sequence[int]] = None) -> Optional[np.ndarray]:
        if not self.labeled:
            return None
        chosen = self.records if indices is None else [self.records[i] for i in indices]
        return np.array([r.label for r in chosen], dtype=np.int64)

    def batch(self, indices: Sequence[int]) -> "DomainBatch":
        return DomainBatch(self.images(indices), self.labels(indices))


@dataclass(eq=False)
class DomainBatch:
    images: Union[np.ndarray, Tensor]
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.images.shape) != 4:
            raise ShapeMismatchError(f"a batch is shaped (B, C, H, W), got {tuple(self.images.shape)}",
                                     shapes=[list(self.images.shape)])
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.size,):
                raise ShapeMismatchError("one label per image is required",
                                         shapes=[list(self.labels.shape), [self.size]])

    @property
    def size(self) -> int:
        return int(self.images.shape[0])
