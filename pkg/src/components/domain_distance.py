"""
Training signals: the domain distance between stylized and real batches, and
the supervised task loss that keeps stylized images in their class.
"""
from typing import Optional, Tuple, Union

import numpy as np

from src.autodiff import Tensor, as_tensor, functional as F
from src.constants import TRAINER_PROJECTIONS
from src.entity.dataset_entity import DomainBatch
from src.entity.networks import CriticNet, Leaves, TaskHead, pool_to
from src.exception import MissingLabelsError, ParameterRangeError, ShapeMismatchError

BatchLike = Union[DomainBatch, Tensor, np.ndarray]


def _images(batch: BatchLike) -> Tensor:
    return as_tensor(batch.images if isinstance(batch, DomainBatch) else batch)


def _flatten(x: Tensor) -> Tensor:
    if x.ndim == 4:
        x = pool_to(x)
    return F.reshape(x, (x.shape[0], -1))


def random_directions(dim: int, projections: int, rng: np.random.Generator) -> np.ndarray:
    """(dim, projections) matrix of unit-norm random directions."""
    directions = rng.standard_normal((dim, projections))
    return directions / np.linalg.norm(directions, axis=0, keepdims=True)


def sliced_wasserstein(a: BatchLike, b: BatchLike,
                       projections: int = TRAINER_PROJECTIONS,
                       rng: Optional[np.random.Generator] = None,
                       directions: Optional[np.ndarray] = None) -> Tensor:
    """
    Mean over shared random projections of the 1-D W1 distance between the two
    projected sets. Images are mean-pooled to the working resolution and flattened.

    Pass ``directions`` (dim, P) to use fixed projections instead of drawing from ``rng``.
    """
    a, b = _flatten(_images(a)), _flatten(_images(b))
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sliced_wasserstein needs equal batches, got {a.shape} and {b.shape}",
                                 inputs=[a.id, b.id], shapes=[list(a.shape), list(b.shape)])
    if directions is None:
        if rng is None:
            raise ParameterRangeError("sliced_wasserstein needs either rng or directions")
        directions = random_directions(a.shape[1], projections, rng)
    directions = Tensor(directions)
    sorted_a = F.sort(a @ directions, axis=0)
    sorted_b = F.sort(b @ directions, axis=0)
    return F.mean(F.absolute(sorted_a - sorted_b))


def critic_distance(critic: CriticNet, real: BatchLike, fake: BatchLike,
                    leaves: Optional[Leaves] = None) -> Tuple[Tensor, Tensor]:
    """Returns (loss for the critic, loss for the policy)."""
    real_mean = F.mean(critic.score(_images(real), leaves))
    fake_mean = F.mean(critic.score(_images(fake), leaves))
    return fake_mean - real_mean, -fake_mean


def cross_entropy_sum(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    picked = F.log_softmax(logits)[np.arange(len(labels)), labels]
    return -F.sum(picked)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    return cross_entropy_sum(logits, labels) * (1.0 / len(labels))


def task_loss(head: TaskHead, real: DomainBatch, stylized: Optional[DomainBatch] = None,
              leaves: Optional[Leaves] = None) -> Tensor:
    """
    Mean cross-entropy over the union of the real batch and the stylized batch;
    stylized images carry their source labels.
    """
    parts = [batch for batch in (real, stylized) if batch is not None and batch.size > 0]
    for batch in parts:
        if batch.labels is None:
            raise MissingLabelsError("task_loss needs labelled batches")
    if not parts:
        raise ShapeMismatchError("task_loss got no images")
    total = None
    count = 0
    for batch in parts:
        term = cross_entropy_sum(head.forward(_images(batch), leaves), batch.labels)
        total = term if total is None else total + term
        count += batch.size
    return total * (1.0 / count)


def total_loss(l_d, l_task, epsilon: float):
    if epsilon < 0:
        raise ParameterRangeError(f"epsilon must be non-negative, got {epsilon}", epsilon=epsilon)
    if epsilon == 0:
        return l_d
    return l_d + epsilon * l_task
