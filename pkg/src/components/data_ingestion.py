import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from src.constants import IMAGE_EXTENSIONS
from src.data_access.image_io import load_image
from src.entity.artifact_entity import DataIngestionArtifact
from src.entity.config_entity import DataIngestionConfig
from src.entity.dataset_entity import DomainDataset, DomainTag, ImageRecord
from src.exception import DatasetReadError, EmptyDatasetError, MyException, ShapeMismatchError, StylizerError
from src.logger import logging


def resize(image: np.ndarray, size: int) -> np.ndarray:
    """
    Centre-crops each side to the largest multiple of ``size`` and mean-pools
    blocks down to ``size`` x ``size``.
    """
    channels, height, width = image.shape
    if height == size and width == size:
        return image
    if height < size or width < size:
        raise ShapeMismatchError(f"image of {height}x{width} is smaller than the working size {size}",
                                 shapes=[[height, width], [size, size]])
    fh, fw = height // size, width // size
    top, left = (height - fh * size) // 2, (width - fw * size) // 2
    cropped = image[:, top:top + fh * size, left:left + fw * size].astype(np.float64)
    return cropped.reshape(channels, size, fh, size, fw).mean(axis=(2, 4)).astype(np.float32)


def _image_files(directory: str) -> List[str]:
    return sorted(name for name in os.listdir(directory)
                  if os.path.isfile(os.path.join(directory, name))
                  and os.path.splitext(name)[1].lower() in IMAGE_EXTENSIONS)


def load_folder(root: str,
                domain_tag: DomainTag = DomainTag.SOURCE,
                size: Optional[int] = None,
                workers: int = 4) -> DomainDataset:
    """
    Reads a dataset folder: one subdirectory per class (labelled) or a flat
    folder of images (unlabelled). Ordering is lexicographic regardless of
    file-system enumeration order.
    """
    if not os.path.isdir(root):
        raise DatasetReadError(f"{root} is not a directory", path=root)

    class_names = sorted(name for name in os.listdir(root) if os.path.isdir(os.path.join(root, name)))
    entries: List[Tuple[str, Optional[int]]] = []
    if class_names:
        for label, class_name in enumerate(class_names):
            class_dir = os.path.join(root, class_name)
            entries.extend((os.path.join(class_dir, name), label) for name in _image_files(class_dir))
        stray = _image_files(root)
        if stray:
            logging.warning(f"Ignoring {len(stray)} images at the top of labelled dataset {root}")
    else:
        entries = [(os.path.join(root, name), None) for name in _image_files(root)]

    if not entries:
        raise EmptyDatasetError(f"no images found under {root}", path=root)

    def read(entry: Tuple[str, Optional[int]]):
        path, label = entry
        try:
            record = load_image(path, label)
            if size is not None:
                record = ImageRecord(resize(record.image, size), label, path)
            return record
        except StylizerError as e:
            return e

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(read, entries))

    offenders = [{"path": path, "error": str(result)}
                 for (path, _), result in zip(entries, results) if isinstance(result, Exception)]
    if offenders:
        raise DatasetReadError(f"{len(offenders)} unreadable files under {root}", path=root, offenders=offenders)

    logging.info(f"Loaded {len(results)} images from {root} ({len(class_names)} classes)")
    return DomainDataset(results, domain_tag, tuple(class_names))


class DataIngestion:
    def __init__(self, data_ingestion_config: DataIngestionConfig):
        """
        :param data_ingestion_config: DataIngestionConfig
            Source and target folders and the working resolution.
        """
        try:
            self.data_ingestion_config = data_ingestion_config
        except Exception as e:
            raise MyException(e, sys)

    def initiate_data_ingestion(self) -> DataIngestionArtifact:
        """
        Method Name: initiate_data_ingestion
        Description: Loads both domains, resized to the working resolution.

        Outputs: returns as a artifact of data ingestion component
        On failure: Raise Exception
        """
        try:
            logging.info("Starting data ingestion")
            config = self.data_ingestion_config
            source = load_folder(config.source_dir, DomainTag.SOURCE, config.working_resolution)
            target = load_folder(config.target_dir, DomainTag.TARGET, config.working_resolution)
            data_ingestion_artifact = DataIngestionArtifact(source=source, target=target)
            logging.info(f"Data ingestion completed: {len(source)} source and {len(target)} target images")
            return data_ingestion_artifact
        except Exception as e:
            raise MyException(e, sys) from e
