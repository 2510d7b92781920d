import math

import numpy as np
import pytest

from src.autodiff import Tensor, functional as F, grad_check, gradients
from src.components.domain_distance import (critic_distance, cross_entropy, random_directions,
                                            sliced_wasserstein, task_loss, total_loss)
from src.components.model_trainer import AdamState, adam_step
from src.constants import CRITIC_CLIP_VALUE
from src.entity.dataset_entity import DomainBatch
from src.entity.networks import CriticNet, TaskHead, pool_to
from src.exception import MissingLabelsError, ParameterRangeError, ShapeMismatchError

SMALL_NET = dict(channels=(3, 4, 4), hidden=4)


class TestSlicedWasserstein:
    def test_zero_for_identical_batches(self, rng):
        a = rng.uniform(size=(6, 3, 8, 8)).astype(np.float32)
        assert sliced_wasserstein(a, a.copy(), rng=np.random.default_rng(0)).item() == 0.0

    def test_one_dimensional_example(self):
        a = np.array([[0.0], [1.0]])
        b = np.array([[1.0], [2.0]])
        distance = sliced_wasserstein(a, b, directions=np.array([[1.0]]))
        assert distance.item() == pytest.approx(1.0)

    def test_symmetric_and_non_negative(self, rng):
        a = rng.uniform(size=(5, 3, 4, 4))
        b = rng.uniform(size=(5, 3, 4, 4))
        directions = random_directions(48, 16, rng)
        ab = sliced_wasserstein(a, b, directions=directions).item()
        ba = sliced_wasserstein(b, a, directions=directions).item()
        assert ab == pytest.approx(ba, abs=1e-7)
        assert ab > 0

    def test_same_rng_state_same_value(self, rng):
        a = rng.uniform(size=(4, 3, 4, 4))
        b = rng.uniform(size=(4, 3, 4, 4))
        first = sliced_wasserstein(a, b, projections=8, rng=np.random.default_rng(3)).item()
        second = sliced_wasserstein(a, b, projections=8, rng=np.random.default_rng(3)).item()
        assert first == second

    def test_directions_are_unit_norm(self, rng):
        directions = random_directions(12, 7, rng)
        np.testing.assert_allclose(np.linalg.norm(directions, axis=0), 1.0)

    def test_large_images_are_pooled(self, rng):
        a = rng.uniform(size=(2, 3, 64, 64)).astype(np.float32)
        assert pool_to(Tensor(a)).shape == (2, 3, 32, 32)
        distance = sliced_wasserstein(a, a[::-1].copy(), projections=4, rng=np.random.default_rng(0))
        assert distance.item() == pytest.approx(0.0, abs=1e-6)

    def test_batch_size_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            sliced_wasserstein(np.zeros((3, 3, 4, 4)), np.zeros((2, 3, 4, 4)), rng=rng)

    def test_needs_rng_or_directions(self):
        with pytest.raises(ParameterRangeError):
            sliced_wasserstein(np.zeros((2, 3, 4, 4)), np.zeros((2, 3, 4, 4)))

    def test_gradient(self, rng):
        b = rng.uniform(size=(4, 3, 2, 2))
        directions = random_directions(12, 5, rng)
        point = rng.uniform(size=(4, 3, 2, 2))
        assert grad_check(lambda a: sliced_wasserstein(a, b, directions=directions), [point], 1e-6) < 1e-4


class TestNetworks:
    def test_output_shapes(self, rng):
        x = rng.uniform(size=(2, 3, 16, 16)).astype(np.float32)
        assert CriticNet(rng, clip_value=0.01, **SMALL_NET).score(x).shape == (2,)
        assert TaskHead(5, rng, **SMALL_NET).forward(x).shape == (2, 5)

    def test_clipping(self, rng):
        critic = CriticNet(rng, clip_value=0.01)
        assert all(np.abs(p).max() <= 0.01 for p in critic.params.values())

    def test_seeded_initialisation(self):
        first = CriticNet(np.random.default_rng(4)).state_dict()
        second = CriticNet(np.random.default_rng(4)).state_dict()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_load_state_dict_checks_shapes(self, rng):
        head = TaskHead(2, rng, **SMALL_NET)
        state = head.state_dict()
        state["fc1_w"] = np.zeros((3, 3), np.float32)
        with pytest.raises(ShapeMismatchError):
            head.load_state_dict(state)

    def test_rejects_non_image_input(self, rng):
        with pytest.raises(ShapeMismatchError):
            TaskHead(2, rng, **SMALL_NET).forward(np.zeros((2, 1, 8, 8), np.float32))

    @pytest.mark.parametrize("name", ["conv0_w", "conv1_b", "fc0_w", "fc1_w"])
    def test_critic_gradient(self, rng, name):
        critic = CriticNet(rng, clip_value=None, **SMALL_NET)
        x = rng.uniform(size=(1, 3, 8, 8))
        params = critic.state_dict()

        def score(p):
            leaves = {k: (p if k == name else Tensor(v)) for k, v in params.items()}
            return F.sum(critic.score(x, leaves))

        assert grad_check(score, [params[name]], 1e-6) < 1e-3

    def test_head_gradient_wrt_input(self, rng):
        head = TaskHead(3, rng, **SMALL_NET)
        point = rng.uniform(size=(1, 3, 8, 8))
        assert grad_check(lambda x: cross_entropy(head.forward(x), np.array([1])), [point], 1e-6) < 1e-3


class TestCriticDistance:
    def test_zero_weights(self, rng):
        critic = CriticNet(rng, **SMALL_NET)
        critic.load_state_dict({k: np.zeros_like(v) for k, v in critic.params.items()})
        real = rng.uniform(size=(3, 3, 8, 8)).astype(np.float32)
        fake = rng.uniform(size=(3, 3, 8, 8)).astype(np.float32)
        critic_loss, policy_loss = critic_distance(critic, real, fake)
        assert critic_loss.item() == 0.0
        assert policy_loss.item() == 0.0

    def test_identical_batches(self, rng):
        critic = CriticNet(rng, clip_value=0.01, **SMALL_NET)
        real = rng.uniform(size=(3, 3, 8, 8)).astype(np.float32)
        critic_loss, _ = critic_distance(critic, real, real.copy())
        assert critic_loss.item() == 0.0

    def test_gradient_reaches_fake_images(self, rng):
        critic = CriticNet(rng, clip_value=0.01, **SMALL_NET)
        fake = Tensor(rng.uniform(size=(2, 3, 8, 8)).astype(np.float32), requires_grad=True)
        _, policy_loss = critic_distance(critic, rng.uniform(size=(2, 3, 8, 8)).astype(np.float32), fake)
        grad = gradients(policy_loss, wrt=[fake])[fake]
        assert grad.shape == fake.shape and np.any(grad != 0)

    def test_training_separates_constant_domains(self, rng):
        critic = CriticNet(rng, clip_value=CRITIC_CLIP_VALUE)
        real = np.full((4, 3, 8, 8), 0.2, np.float32)
        fake = np.full((4, 3, 8, 8), 0.8, np.float32)
        state = AdamState.zeros_like(critic.params)
        initial = critic_distance(critic, real, fake)[0].item()
        for _ in range(200):
            leaves = critic.leaves()
            loss, _ = critic_distance(critic, real, fake, leaves)
            grads = gradients(loss, wrt=list(leaves.values())).of(leaves)
            critic.params, state = adam_step(critic.params, grads, state, lr=1e-3)
            critic.clip()
        final = critic_distance(critic, real, fake)[0].item()
        assert final < initial
        assert final < -0.01
        for values in critic.params.values():
            assert np.abs(values).max() <= CRITIC_CLIP_VALUE


class TestTaskLoss:
    def test_uniform_logits(self):
        head = TaskHead(4, np.random.default_rng(0), **SMALL_NET)
        head.load_state_dict({k: np.zeros_like(v) for k, v in head.params.items()})
        batch = DomainBatch(np.zeros((3, 3, 8, 8), np.float32), np.array([0, 1, 3]))
        assert task_loss(head, batch).item() == pytest.approx(math.log(4), rel=1e-6)

    def test_confident_correct_logits(self):
        logits = Tensor(np.array([[40.0, 0.0], [0.0, 40.0]], np.float32))
        assert cross_entropy(logits, np.array([0, 1])).item() <= 1e-6

    def test_empty_stylized_batch(self, rng):
        head = TaskHead(2, rng, **SMALL_NET)
        real = DomainBatch(rng.uniform(size=(3, 3, 8, 8)).astype(np.float32), np.array([0, 1, 1]))
        empty = DomainBatch(np.zeros((0, 3, 8, 8), np.float32), np.zeros(0, np.int64))
        assert task_loss(head, real, empty).item() == task_loss(head, real).item()

    def test_union_is_a_weighted_mean(self, rng):
        head = TaskHead(2, rng, **SMALL_NET)
        real = DomainBatch(rng.uniform(size=(1, 3, 8, 8)).astype(np.float32), np.array([0]))
        stylized = DomainBatch(rng.uniform(size=(3, 3, 8, 8)).astype(np.float32), np.array([1, 0, 1]))
        both = task_loss(head, real, stylized).item()
        expected = (task_loss(head, real).item() + 3 * task_loss(head, stylized).item()) / 4
        assert both == pytest.approx(expected, rel=1e-5)

    def test_unlabelled_batch(self, rng):
        head = TaskHead(2, rng, **SMALL_NET)
        with pytest.raises(MissingLabelsError):
            task_loss(head, DomainBatch(np.zeros((2, 3, 8, 8), np.float32)))


class TestTotalLoss:
    def test_weighted_sum(self):
        assert total_loss(0.5, 1.0, 0.1) == pytest.approx(0.6)

    def test_zero_epsilon_returns_distance(self):
        l_d = Tensor(np.float32(0.5))
        assert total_loss(l_d, Tensor(np.float32(2.0)), 0.0) is l_d

    def test_negative_epsilon(self):
        with pytest.raises(ParameterRangeError):
            total_loss(0.5, 1.0, -0.1)
