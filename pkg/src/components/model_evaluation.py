import sys
from typing import Dict, Optional, Sequence

import numpy as np

from src.autodiff import Tensor
from src.components.data_transformation import BASELINE_KINDS, baseline_array
from src.components.domain_distance import random_directions, sliced_wasserstein
from src.entity.artifact_entity import ModelEvaluationArtifact
from src.entity.config_entity import ModelEvaluationConfig
from src.entity.dataset_entity import DomainDataset, ImageRecord
from src.entity.networks import pool_to
from src.entity.policy import Policy, stylize_batch
from src.exception import MyException, ShapeMismatchError
from src.logger import logging
from src.utils.main_utils import derive_seed, write_json_file


def record_seeds(records: Sequence[ImageRecord], seed: int) -> list:
    """Per-image seeds from (seed, file name); falls back to the index for in-memory records."""
    return [derive_seed(seed, record.source_path or str(i)) for i, record in enumerate(records)]


def shared_directions(images: np.ndarray, projections: int, seed: int) -> np.ndarray:
    dim = pool_to(Tensor(images[:1])).size
    return random_directions(dim, projections, np.random.default_rng(seed))


def folder_distance(a: np.ndarray, b: np.ndarray, projections: int, seed: int) -> float:
    """Sliced Wasserstein between two image stacks with seeded shared projections."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"distance needs equal stacks, got {a.shape} and {b.shape}",
                                 shapes=[list(a.shape), list(b.shape)])
    return sliced_wasserstein(a, b, directions=shared_directions(a, projections, seed)).item()


def _paired_sample(a: DomainDataset, b: DomainDataset, num_images: int, seed: int):
    """Equal-size index samples; both draw from the same seed so equal datasets pair up exactly."""
    n = min(num_images, len(a), len(b))
    a_idx = np.sort(np.random.default_rng(seed).permutation(len(a))[:n])
    b_idx = np.sort(np.random.default_rng(seed).permutation(len(b))[:n])
    return a_idx, b_idx


def dataset_distance(a: DomainDataset, b: DomainDataset,
                     config: Optional[ModelEvaluationConfig] = None) -> float:
    """Distance between equal-size seeded samples of two datasets."""
    config = config or ModelEvaluationConfig()
    a_idx, b_idx = _paired_sample(a, b, config.num_images, config.seed)
    return folder_distance(a.images(a_idx), b.images(b_idx), config.projections, config.seed)


def compare_stylizers(source: DomainDataset, target: DomainDataset,
                      policy: Optional[Policy] = None,
                      config: Optional[ModelEvaluationConfig] = None,
                      baselines: Sequence[str] = BASELINE_KINDS,
                      workers: int = 4) -> Dict[str, float]:
    """
    Distance from each stylized source sample to a target sample of the same
    size; every stylizer shares the samples and the projections.
    """
    config = config or ModelEvaluationConfig()
    source_idx, target_idx = _paired_sample(source, target, config.num_images, config.seed)
    source_images = source.images(source_idx)
    target_images = target.images(target_idx)
    directions = shared_directions(target_images, config.projections, config.seed)

    def distance(stylized: np.ndarray) -> float:
        return sliced_wasserstein(stylized, target_images, directions=directions).item()

    distances = {kind: distance(np.stack([baseline_array(kind, image) for image in source_images]))
                 for kind in baselines}
    if policy is not None:
        records = [source.records[i] for i in source_idx]
        stylized = stylize_batch(policy, source_images, record_seeds(records, config.seed), workers=workers)
        distances["policy"] = distance(stylized)
    logging.info(f"Distances to the target domain: {distances}")
    return distances


class ModelEvaluation:
    def __init__(self, model_evaluation_config: ModelEvaluationConfig,
                 source: DomainDataset, target: DomainDataset, policy: Optional[Policy] = None):
        """
        :param model_evaluation_config: ModelEvaluationConfig
            Sample size, projections and seed of the evaluation.
        :param policy: the trained policy, compared with the hand-crafted baselines
        """
        try:
            self.model_evaluation_config = model_evaluation_config
            self.source = source
            self.target = target
            self.policy = policy
        except Exception as e:
            raise MyException(e, sys)

    def initiate_model_evaluation(self) -> ModelEvaluationArtifact:
        """
        Method Name: initiate_model_evaluation
        Description: Compares the policy with the identity and hand-crafted baselines.

        Output: Returns ModelEvaluationArtifact
        On Failure: Raise Exception
        """
        try:
            logging.info("Starting model evaluation")
            distances = compare_stylizers(self.source, self.target, self.policy, self.model_evaluation_config)
            identity = distances["identity"]
            policy_distance = distances.get("policy")
            ratio = None
            if policy_distance is not None and identity > 0:
                ratio = policy_distance / identity
            artifact = ModelEvaluationArtifact(distances=distances,
                                               identity_distance=identity,
                                               policy_distance=policy_distance,
                                               ratio_to_identity=ratio,
                                               report_file_path=self.model_evaluation_config.report_file_path)
            if artifact.report_file_path:
                write_json_file(artifact.report_file_path, artifact.to_dict())
            logging.info(f"Model evaluation artifact: {artifact.to_dict()}")
            return artifact
        except Exception as e:
            raise MyException(e, sys) from e
