"""End-to-end training runs on synthetic data with a known hidden stylization."""
import numpy as np
import pytest

from src.autodiff import functional as F, grad_check
from src.components.domain_distance import cross_entropy, random_directions, sliced_wasserstein
from src.components.model_evaluation import compare_stylizers
from src.components.model_trainer import train
from src.components.synthetic_data import synth_generate
from src.entity.config_entity import ModelEvaluationConfig, SynthSpec, TrainConfig
from src.entity.networks import CriticNet, TaskHead
from src.entity.policy import summary
from src.logger import logging

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def hidden_domains():
    spec = SynthSpec(image_size=32, num_images=512, num_classes=2,
                     hidden_policy=(("grayscale", None), ("invert", None)), noise_sigma=0.01)
    return synth_generate(spec, seed=7)


def test_recovers_the_hidden_stylization(hidden_domains):
    config = TrainConfig(k=4, steps=2000, epsilon=0.0, backend="sliced", seed=7, supervised=False)
    policy, report = train(config, *hidden_domains)
    distances = compare_stylizers(*hidden_domains, policy=policy, config=ModelEvaluationConfig())
    assert distances["policy"] <= 0.5 * distances["identity"]

    counts = summary(policy).to_dict()["expected_count"]
    top = sorted(counts, key=counts.get, reverse=True)[:2]
    logging.info(f"Recovered policy, most used ops: {top}; distances: {distances}")
    assert report.counters["task_forward"] == 0


def test_supervised_training_reduces_the_task_loss(hidden_domains):
    config = TrainConfig(k=4, steps=2000, epsilon=0.1, backend="sliced", seed=7, supervised=True)
    _, report = train(config, *hidden_domains)
    assert all(np.isfinite(report.loss_sequence("l_total")))
    task = report.loss_sequence("l_task")
    assert task[-1] <= task[0]


def test_network_and_distance_gradients_over_many_points():
    small = dict(channels=(3, 4, 4), hidden=4)
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        critic = CriticNet(rng, clip_value=None, **small)
        head = TaskHead(2, rng, **small)
        x = rng.uniform(size=(1, 3, 8, 8))
        worst = max(worst, grad_check(lambda v: F.sum(critic.score(v)), [x], 1e-6))
        worst = max(worst, grad_check(lambda v: cross_entropy(head.forward(v), np.array([seed % 2])), [x], 1e-6))

        b = rng.uniform(size=(4, 3, 2, 2))
        directions = random_directions(12, 4, rng)
        worst = max(worst, grad_check(lambda a: sliced_wasserstein(a, b, directions=directions),
                                      [rng.uniform(size=(4, 3, 2, 2))], 1e-6))
    assert worst <= 1e-3
