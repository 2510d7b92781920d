import copy
import json
import os

import numpy as np
import pytest

from src.components.domain_distance import random_directions, sliced_wasserstein, task_loss
from src.components.model_trainer import (AdamState, EpochSampler, ModelTrainer, PolicyTrainer, adam_step,
                                          anneal, checkpoint_load, checkpoint_save, train)
from src.constants import CHECKPOINT_MAGIC
from src.entity.config_entity import ModelTrainerConfig
from src.entity.dataset_entity import DomainBatch, DomainDataset, ImageRecord
from src.entity.policy import deterministic_policy, load_policy, relaxed_forward, serialize
from src.exception import (CheckpointError, EmptyDatasetError, MissingLabelsError, MyException,
                           UsageError, VersionMismatchError)
from src.utils.main_utils import read_json_lines


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params = {"a": np.array([1.0, -2.0], np.float32)}
        new, state = adam_step(params, {"a": np.zeros(2, np.float32)}, AdamState.zeros_like(params), lr=0.1)
        np.testing.assert_array_equal(new["a"], params["a"])
        assert state.t == 1

    def test_first_step_moves_by_learning_rate(self):
        params = {"a": np.array([1.0, 1.0], np.float32)}
        grads = {"a": np.array([3.0, -0.5], np.float32)}
        new, _ = adam_step(params, grads, AdamState.zeros_like(params), lr=0.01)
        np.testing.assert_allclose(new["a"], [0.99, 1.01], atol=1e-6)

    def test_state_is_not_mutated(self):
        params = {"a": np.ones(3, np.float32)}
        state = AdamState.zeros_like(params)
        adam_step(params, {"a": np.ones(3, np.float32)}, state, lr=0.1)
        assert state.t == 0
        np.testing.assert_array_equal(state.m["a"], 0.0)


@pytest.mark.parametrize("step, expected", [(0, 1.0), (99, 0.1), (33, 0.7), (66, 0.4)])
def test_anneal(step, expected):
    assert anneal((1.0, 0.1), step, 100) == pytest.approx(expected)


def test_anneal_single_step():
    assert anneal((1.0, 0.1), 0, 1) == 1.0


class TestEpochSampler:
    def test_every_index_once_per_epoch(self):
        sampler = EpochSampler(10, 5, np.random.default_rng(0))
        seen = np.concatenate([sampler.next_batch() for _ in range(2)])
        assert sorted(seen) == list(range(10))
        assert sampler.epoch == 0

    def test_batches_span_epoch_boundary(self):
        sampler = EpochSampler(5, 3, np.random.default_rng(0))
        first, second = sampler.next_batch(), sampler.next_batch()
        assert len(second) == 3
        assert sorted(np.concatenate([first, second[:2]])) == list(range(5))
        assert sampler.epoch == 1

    def test_state_round_trip(self):
        rng = np.random.default_rng(1)
        sampler = EpochSampler(7, 3, rng)
        sampler.next_batch()
        state, rng_state = sampler.state_dict(), rng.bit_generator.state
        expected = [sampler.next_batch() for _ in range(4)]
        rng.bit_generator.state = rng_state
        sampler.load_state_dict(state)
        for batch in expected:
            np.testing.assert_array_equal(sampler.next_batch(), batch)


class TestCheckpointFile:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "state.ckpt")
        checkpoint_save({"step": 3, "values": np.arange(4)}, path)
        with open(path, "rb") as file_obj:
            assert file_obj.read(8) == CHECKPOINT_MAGIC
        state = checkpoint_load(path)
        assert state["step"] == 3
        np.testing.assert_array_equal(state["values"], np.arange(4))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT\x01\x00\x00\x00payload")
        with pytest.raises(CheckpointError):
            checkpoint_load(str(path))

    def test_future_version(self, tmp_path):
        path = tmp_path / "future.ckpt"
        path.write_bytes(CHECKPOINT_MAGIC + (2).to_bytes(4, "little") + b"payload")
        with pytest.raises(VersionMismatchError):
            checkpoint_load(str(path))

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.ckpt"
        path.write_bytes(b"STYL")
        with pytest.raises(CheckpointError):
            checkpoint_load(str(path))

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError):
            checkpoint_load(str(tmp_path / "absent.ckpt"))


class TestPolicyTrainer:
    def test_training_is_deterministic(self, small_config, small_domains):
        first, report_a = train(small_config, *small_domains)
        second, report_b = train(small_config, *small_domains)
        assert serialize(first) == serialize(second)
        assert report_a.loss_sequence() == report_b.loss_sequence()

    def test_seed_changes_the_result(self, small_config, small_domains):
        first, _ = train(small_config, *small_domains)
        second, _ = train(small_config.updated(seed=12), *small_domains)
        assert serialize(first) != serialize(second)

    def test_report(self, small_config, small_domains):
        _, report = train(small_config, *small_domains)
        assert [r.step for r in report.records] == list(range(1, 7))
        assert report.records[0].tau_select == 1.0
        assert report.records[-1].tau_select == pytest.approx(0.1)
        assert report.records[-1].tau_gate == pytest.approx(0.5)
        assert all(np.isfinite(report.loss_sequence("l_d")))
        assert report.counters["policy_updates"] == 6

    def test_unsupervised_skips_the_task_head(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(epsilon=0.0), *small_domains)
        trainer.run()
        assert trainer.head is None
        assert trainer.counters.task_forward == 0
        assert all(r.l_task == 0.0 for r in trainer.records)

    def test_supervised_updates_the_head(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(supervised=True, epsilon=0.1, steps=3), *small_domains)
        trainer.run()
        assert trainer.counters.task_forward == 3
        assert trainer.counters.task_updates == 3
        for record in trainer.records:
            assert record.l_total == pytest.approx(record.l_d + 0.1 * record.l_task, rel=1e-5)

    def test_total_loss_recomputes_from_the_step_batches(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(supervised=True, epsilon=0.1, steps=3), *small_domains)
        trainer.train_step()
        replay = copy.deepcopy(trainer)
        record = trainer.train_step()

        config = replay.config
        policy = replay.policy.with_temperatures(anneal(config.tau_select_schedule, replay.step, config.steps),
                                                 anneal(config.tau_gate_schedule, replay.step, config.steps))
        source_batch = replay.source.batch(replay.source_sampler.next_batch())
        target_batch = replay.target.batch(replay.target_sampler.next_batch())
        fake = relaxed_forward(policy, source_batch.images, replay.rngs["gate"])
        l_d = sliced_wasserstein(fake, target_batch.images, config.projections, replay.rngs["projection"]).item()
        l_task = task_loss(replay.head, target_batch, DomainBatch(fake, source_batch.labels)).item()

        assert record.l_d == pytest.approx(l_d, abs=1e-6)
        assert record.l_task == pytest.approx(l_task, abs=1e-6)
        assert record.l_total == pytest.approx(l_d + 0.1 * l_task, abs=1e-6)

    def test_large_steps_keep_parameters_in_range(self, small_config, small_domains):
        policy, _ = train(small_config.updated(lr_policy=0.5), *small_domains)
        mu01 = policy.arrays()["mu01"]
        assert mu01.min() >= 0.0 and mu01.max() <= 1.0

    def test_zero_learning_rate_keeps_the_initial_policy(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(lr_policy=0.0), *small_domains)
        initial = trainer.policy.arrays()
        trainer.run()
        for name, values in trainer.policy.arrays().items():
            np.testing.assert_array_equal(values, initial[name])

    def test_frozen_policy_losses_follow_the_batch_sampling(self, small_config, small_domains):
        def l_d_sequence(seed):
            _, report = train(small_config.updated(lr_policy=0.0, seed=seed), *small_domains)
            return report.loss_sequence("l_d")

        first = l_d_sequence(21)
        assert l_d_sequence(21) == first
        assert l_d_sequence(22) != first

    def test_critic_backend(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(backend="critic", steps=2), *small_domains)
        trainer.run()
        assert trainer.counters.critic_updates == 2 * trainer.config.n_critic
        assert trainer.counters.critic_forward == 2 * (trainer.config.n_critic + 1)
        for values in trainer.critic.params.values():
            assert np.abs(values).max() <= trainer.config.clip_value

    def test_augmentation_mode_trains_on_the_target(self, small_config, small_domains):
        trainer = PolicyTrainer(small_config.updated(mode="augmentation"), *small_domains)
        assert trainer.source is small_domains[1]

    def test_resume_is_bit_exact(self, tmp_path, small_config, small_domains):
        full = PolicyTrainer(small_config, *small_domains)
        full.run()

        path = str(tmp_path / "half.ckpt")
        half = PolicyTrainer(small_config, *small_domains)
        half.run(until=3)
        half.save_checkpoint(path)
        resumed = PolicyTrainer.resume(path, *small_domains)
        assert resumed.step == 3
        resumed.run()

        assert serialize(resumed.policy) == serialize(full.policy)
        assert [r.to_dict() for r in resumed.records] == [r.to_dict() for r in full.records]
        assert resumed.counters == full.counters

    def test_resume_with_critic_is_bit_exact(self, tmp_path, small_config, small_domains):
        config = small_config.updated(backend="critic", steps=4, n_critic=2)
        full = PolicyTrainer(config, *small_domains)
        full.run()
        path = str(tmp_path / "critic.ckpt")
        half = PolicyTrainer(config, *small_domains)
        half.run(until=2)
        half.save_checkpoint(path)
        resumed = PolicyTrainer.resume(path, *small_domains)
        resumed.run()
        assert serialize(resumed.policy) == serialize(full.policy)
        for name, values in full.critic.params.items():
            np.testing.assert_array_equal(resumed.critic.params[name], values)

    def test_empty_dataset(self, small_config, small_domains):
        with pytest.raises(EmptyDatasetError):
            PolicyTrainer(small_config, small_domains[0], DomainDataset([]))

    def test_supervised_needs_labels(self, small_config, small_domains):
        unlabeled = DomainDataset([ImageRecord(r.image) for r in small_domains[1].records])
        with pytest.raises(MissingLabelsError):
            PolicyTrainer(small_config.updated(supervised=True), small_domains[0], unlabeled)

    def test_invalid_config(self, small_config, small_domains):
        with pytest.raises(UsageError):
            PolicyTrainer(small_config.updated(batch_size=1), *small_domains)


def test_distance_prefers_the_hidden_stylization(small_domains):
    source, target = small_domains
    images = source.images()
    directions = random_directions(3 * 16 * 16, 32, np.random.default_rng(0))
    noise = np.random.default_rng(1)

    def distance(choices):
        fake = relaxed_forward(deterministic_policy(choices), images, noise)
        return sliced_wasserstein(fake, target.images(), directions=directions).item()

    assert distance([("grayscale", None), ("invert", None)]) < distance([("identity", None)])
    assert distance([("invert", None)]) < distance([("identity", None)])


def test_identical_domains_prefer_identity_to_invert(small_config, small_domains):
    domain = small_domains[1]
    config = small_config.updated(steps=1, epsilon=0.0, batch_size=16)

    def first_step_distance(choice):
        trainer = PolicyTrainer(config, domain, domain)
        trainer.policy = deterministic_policy([(choice, None), ("identity", None)])
        return trainer.train_step().l_d

    assert first_step_distance("identity") < first_step_distance("invert")


class TestModelTrainer:
    def test_writes_artifacts(self, tmp_path, small_config, small_domains):
        output = str(tmp_path / "run")
        artifact = ModelTrainer(ModelTrainerConfig(output_dir=output), small_config,
                                *small_domains).initiate_model_trainer()
        for path in (artifact.policy_file_path, artifact.checkpoint_file_path,
                     artifact.report_file_path, artifact.summary_file_path):
            assert os.path.isfile(path)
        assert len(read_json_lines(artifact.report_file_path)) == small_config.steps
        with open(os.path.join(output, "effective_config.json")) as file_obj:
            assert json.load(file_obj)["seed"] == small_config.seed
        assert load_policy(artifact.policy_file_path).K == small_config.k

    def test_resume_from_checkpoint(self, tmp_path, small_config, small_domains):
        first = ModelTrainer(ModelTrainerConfig(output_dir=str(tmp_path / "a")), small_config,
                             *small_domains).initiate_model_trainer()
        longer = small_config.updated(steps=8)
        path = str(tmp_path / "short.ckpt")
        trainer = PolicyTrainer(longer, *small_domains)
        trainer.run(until=4)
        trainer.save_checkpoint(path)
        resumed = ModelTrainer(ModelTrainerConfig(output_dir=str(tmp_path / "b"), resume_from=path),
                               longer, *small_domains).initiate_model_trainer()
        assert len(resumed.report.records) == 8
        assert first.report.records[0].step == 1

    def test_wraps_failures(self, tmp_path, small_config, small_domains):
        trainer = ModelTrainer(ModelTrainerConfig(output_dir=str(tmp_path / "c"),
                                                  resume_from=str(tmp_path / "absent.ckpt")),
                               small_config, *small_domains)
        with pytest.raises(MyException):
            trainer.initiate_model_trainer()
