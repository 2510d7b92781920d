import os
import struct
import sys
import time
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import dill
import numpy as np

from src.autodiff import Tensor, gradients
from src.components.data_validation import validate_datasets
from src.components.domain_distance import critic_distance, sliced_wasserstein, task_loss, total_loss
from src.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC
from src.entity.artifact_entity import ModelTrainerArtifact, StepRecord, TrainReport
from src.entity.config_entity import ModelTrainerConfig, TrainConfig
from src.entity.dataset_entity import DomainBatch, DomainDataset
from src.entity.networks import CriticNet, TaskHead
from src.entity.op_dictionary import OpRegistry, default_registry
from src.entity.policy import (Policy, from_document, init_policy, relaxed_forward, save_policy, summary,
                               to_document)
from src.exception import CheckpointError, MyException, NumericError, VersionMismatchError
from src.logger import logging
from src.utils.main_utils import write_json_file, write_json_lines

RNG_STREAMS: Tuple[str, ...] = ("source", "target", "gate", "projection", "critic", "head")
_HEADER = struct.Struct("<8sI")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: Mapping[str, np.ndarray],
              grads: Mapping[str, np.ndarray],
              state: AdamState,
              lr: float,
              beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam update. Returns new parameter arrays and a new state."""
    t = state.t + 1
    new_params, m, v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        m[name] = (beta1 * state.m[name] + (1 - beta1) * g).astype(p.dtype)
        v[name] = (beta2 * state.v[name] + (1 - beta2) * g * g).astype(p.dtype)
        m_hat = m[name] / (1 - beta1 ** t)
        v_hat = v[name] / (1 - beta2 ** t)
        new_params[name] = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    return new_params, AdamState(m, v, t)


def anneal(schedule: Tuple[float, float], step: int, total_steps: int) -> float:
    start, end = schedule
    if total_steps <= 1:
        return float(start)
    return float(start + (end - start) * step / (total_steps - 1))


class EpochSampler:
    """Index batches drawn without replacement, reshuffled at every epoch boundary."""

    def __init__(self, size: int, batch_size: int, rng: np.random.Generator):
        self.size = size
        self.batch_size = batch_size
        self.rng = rng
        self.order = rng.permutation(size)
        self.position = 0
        self.epoch = 0

    def next_batch(self) -> np.ndarray:
        taken = []
        needed = self.batch_size
        while needed:
            if self.position == self.size:
                self.order = self.rng.permutation(self.size)
                self.position = 0
                self.epoch += 1
            chunk = self.order[self.position:self.position + needed]
            taken.append(chunk)
            self.position += len(chunk)
            needed -= len(chunk)
        return np.concatenate(taken)

    def state_dict(self) -> Dict[str, Any]:
        return {"order": self.order.copy(), "position": self.position, "epoch": self.epoch}

    def load_state_dict(self, state: Mapping[str, Any]) -> None:
        self.order = np.array(state["order"])
        self.position = int(state["position"])
        self.epoch = int(state["epoch"])


def checkpoint_save(state: Mapping[str, Any], path: str) -> None:
    """Magic, little-endian u32 format version, then the dill-serialized state."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as file_obj:
        file_obj.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_FORMAT_VERSION))
        dill.dump(dict(state), file_obj)
    logging.info(f"Checkpoint written to {path}")


def checkpoint_load(path: str) -> Dict[str, Any]:
    try:
        with open(path, "rb") as file_obj:
            data = file_obj.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}", path=path) from e
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path} is too short to be a checkpoint", path=path)
    magic, version = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)", path=path)
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint format version {version} is not supported",
                                   path=path, found=version, expected=CHECKPOINT_FORMAT_VERSION)
    try:
        state = dill.loads(data[_HEADER.size:])
    except Exception as e:
        raise CheckpointError(f"{path}: corrupt checkpoint payload: {e}", path=path) from e
    if not isinstance(state, dict):
        raise CheckpointError(f"{path}: checkpoint payload is not a state dictionary", path=path)
    return state


def _check_finite(step: int, name: str, value) -> None:
    values = value.values() if isinstance(value, Mapping) else [value]
    if not all(np.all(np.isfinite(v)) for v in values):
        raise NumericError(f"non-finite {name} at step {step}", step=step, quantity=name)


@dataclass
class _Counters:
    policy_updates: int = 0
    critic_forward: int = 0
    critic_updates: int = 0
    task_forward: int = 0
    task_updates: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


class PolicyTrainer:
    """
    Optimizes a stylization policy so stylized source batches approach real
    target batches, optionally with a task head keeping class identity.
    Bit-deterministic for a given config and datasets.
    """

    def __init__(self, config: TrainConfig, source: DomainDataset, target: DomainDataset,
                 registry: Optional[OpRegistry] = None):
        self.config = config.validate()
        validate_datasets(source, target, config.supervised)
        if config.mode == "augmentation":
            source = target
        self.source = source
        self.target = target
        self.registry = registry or default_registry()

        streams = np.random.SeedSequence(config.seed).spawn(len(RNG_STREAMS))
        self.rngs: Dict[str, np.random.Generator] = {
            name: np.random.default_rng(seq) for name, seq in zip(RNG_STREAMS, streams)}
        self.source_sampler = EpochSampler(len(source), config.batch_size, self.rngs["source"])
        self.target_sampler = EpochSampler(len(target), config.batch_size, self.rngs["target"])

        self.policy: Policy = init_policy(config.k, self.registry, config.seed,
                                          config.tau_select_schedule[0], config.tau_gate_schedule[0])
        self.policy_state = AdamState.zeros_like(self.policy.arrays())

        self.critic: Optional[CriticNet] = None
        self.critic_state: Optional[AdamState] = None
        if config.backend == "critic":
            self.critic = CriticNet(self.rngs["critic"], clip_value=config.clip_value)
            self.critic_state = AdamState.zeros_like(self.critic.params)

        self.head: Optional[TaskHead] = None
        self.head_state: Optional[AdamState] = None
        if config.supervised:
            self.head = TaskHead(len(target.class_names), self.rngs["head"])
            self.head_state = AdamState.zeros_like(self.head.params)

        self.step = 0
        self.records = []
        self.counters = _Counters()
        self.elapsed = 0.0

    def _critic_updates(self, real: np.ndarray, fake: np.ndarray) -> None:
        for _ in range(self.config.n_critic):
            leaves = self.critic.leaves()
            loss_critic, _ = critic_distance(self.critic, real, fake, leaves)
            self.counters.critic_forward += 1
            grads = gradients(loss_critic, wrt=list(leaves.values())).of(leaves)
            _check_finite(self.step + 1, "critic gradient", grads)
            params, self.critic_state = adam_step(self.critic.params, grads, self.critic_state,
                                                  self.config.lr_critic)
            self.critic.load_state_dict(params)
            self.critic.clip()
            self.counters.critic_updates += 1

    def train_step(self) -> StepRecord:
        config = self.config
        tau_select = anneal(config.tau_select_schedule, self.step, config.steps)
        tau_gate = anneal(config.tau_gate_schedule, self.step, config.steps)
        self.policy = self.policy.with_temperatures(tau_select, tau_gate)

        source_batch = self.source.batch(self.source_sampler.next_batch())
        target_batch = self.target.batch(self.target_sampler.next_batch())

        leaves = self.policy.leaves()
        fake = self.policy_forward(source_batch.images, leaves)

        if config.backend == "critic":
            self._critic_updates(target_batch.images, fake.numpy())
            _, l_d = critic_distance(self.critic, target_batch.images, fake)
            self.counters.critic_forward += 1
        else:
            l_d = sliced_wasserstein(fake, target_batch.images, config.projections, self.rngs["projection"])

        l_task = None
        head_leaves = None
        if config.supervised:
            head_leaves = self.head.leaves()
            l_task = task_loss(self.head, target_batch, DomainBatch(fake, source_batch.labels), head_leaves)
            self.counters.task_forward += 1
        l_total = total_loss(l_d, l_task, config.epsilon) if l_task is not None else l_d
        _check_finite(self.step + 1, "loss", l_total.value)

        policy_grads = gradients(l_total, wrt=list(leaves)).of(leaves.named())
        _check_finite(self.step + 1, "policy gradient", policy_grads)
        params, self.policy_state = adam_step(self.policy.arrays(), policy_grads, self.policy_state,
                                              config.lr_policy)
        self.policy = self.policy.with_arrays(params["w"], params["mu01"], params["p_logit"])
        self.counters.policy_updates += 1

        if l_task is not None:
            head_grads = gradients(l_task, wrt=list(head_leaves.values())).of(head_leaves)
            _check_finite(self.step + 1, "task head gradient", head_grads)
            params, self.head_state = adam_step(self.head.params, head_grads, self.head_state, config.lr_task)
            self.head.load_state_dict(params)
            self.counters.task_updates += 1

        self.step += 1
        record = StepRecord(step=self.step,
                            l_d=l_d.item(),
                            l_task=l_task.item() if l_task is not None else 0.0,
                            l_total=l_total.item(),
                            tau_select=tau_select,
                            tau_gate=tau_gate)
        self.records.append(record)
        logging.debug(f"step {record.step}: {record.to_dict()}")
        return record

    def policy_forward(self, images: np.ndarray, leaves) -> Tensor:
        return relaxed_forward(self.policy, images, self.rngs["gate"], leaves)

    def run(self, until: Optional[int] = None,
            checkpoint_path: Optional[str] = None,
            checkpoint_every: int = 0) -> Tuple[Policy, TrainReport]:
        """Trains up to step ``until`` (default: config.steps) and returns the policy and report."""
        until = self.config.steps if until is None else min(until, self.config.steps)
        logging.info(f"Training from step {self.step} to {until} with backend={self.config.backend}, "
                     f"supervised={self.config.supervised}, mode={self.config.mode}")
        started = time.perf_counter()
        while self.step < until:
            record = self.train_step()
            if record.step % self.config.log_every == 0 or record.step == until:
                logging.info(f"step {record.step}/{self.config.steps} L_d={record.l_d:.6f} "
                             f"L_task={record.l_task:.6f} L_total={record.l_total:.6f} "
                             f"tau_select={record.tau_select:.3f}")
            if checkpoint_path and checkpoint_every and record.step % checkpoint_every == 0:
                self.save_checkpoint(checkpoint_path)
        self.elapsed += time.perf_counter() - started
        return self.policy, self.report()

    def report(self) -> TrainReport:
        return TrainReport(records=list(self.records),
                           summary=summary(self.policy).to_dict(),
                           wall_time_seconds=self.elapsed,
                           counters=self.counters.as_dict(),
                           effective_config=self.config.to_dict())

    def state_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "step": self.step,
            "policy": to_document(self.policy),
            "policy_state": self.policy_state,
            "critic": self.critic.state_dict() if self.critic else None,
            "critic_state": self.critic_state,
            "head": self.head.state_dict() if self.head else None,
            "head_state": self.head_state,
            "rngs": {name: rng.bit_generator.state for name, rng in self.rngs.items()},
            "samplers": {"source": self.source_sampler.state_dict(), "target": self.target_sampler.state_dict()},
            "records": [r.to_dict() for r in self.records],
            "counters": self.counters.as_dict(),
            "elapsed": self.elapsed,
        }

    def load_state_dict(self, state: Mapping[str, Any]) -> None:
        self.step = int(state["step"])
        self.policy = from_document(state["policy"], self.registry)
        self.policy_state = state["policy_state"]
        if self.critic is not None:
            self.critic.load_state_dict(state["critic"])
            self.critic_state = state["critic_state"]
        if self.head is not None:
            self.head.load_state_dict(state["head"])
            self.head_state = state["head_state"]
        for name, rng_state in state["rngs"].items():
            self.rngs[name].bit_generator.state = rng_state
        self.source_sampler.load_state_dict(state["samplers"]["source"])
        self.target_sampler.load_state_dict(state["samplers"]["target"])
        self.records = [StepRecord(**r) for r in state["records"]]
        self.counters = _Counters(**state["counters"])
        self.elapsed = float(state.get("elapsed", 0.0))

    def save_checkpoint(self, path: str) -> None:
        checkpoint_save(self.state_dict(), path)

    @classmethod
    def resume(cls, path: str, source: DomainDataset, target: DomainDataset,
               registry: Optional[OpRegistry] = None) -> "PolicyTrainer":
        state = checkpoint_load(path)
        try:
            config = TrainConfig.from_dict(state["config"])
        except KeyError as e:
            raise CheckpointError(f"{path}: checkpoint lacks {e}", path=path) from None
        trainer = cls(config, source, target, registry)
        trainer.load_state_dict(state)
        logging.info(f"Resumed training from {path} at step {trainer.step}")
        return trainer


def train(config: TrainConfig, source: DomainDataset, target: DomainDataset,
          registry: Optional[OpRegistry] = None) -> Tuple[Policy, TrainReport]:
    return PolicyTrainer(config, source, target, registry).run()


class ModelTrainer:
    def __init__(self, model_trainer_config: ModelTrainerConfig, train_config: TrainConfig,
                 source: DomainDataset, target: DomainDataset):
        """
        :param model_trainer_config: ModelTrainerConfig
            Where the policy, checkpoint and reports go.
        :param train_config: TrainConfig
            Effective training hyperparameters.
        """
        try:
            self.model_trainer_config = model_trainer_config
            self.train_config = train_config
            self.source = source
            self.target = target
        except Exception as e:
            raise MyException(e, sys)

    def initiate_model_trainer(self) -> ModelTrainerArtifact:
        """
        Method Name: initiate_model_trainer
        Description: Trains the policy and writes the policy file, checkpoint and reports.

        Output: Returns ModelTrainerArtifact
        On Failure: Raise Exception
        """
        try:
            config = self.model_trainer_config
            os.makedirs(config.output_dir, exist_ok=True)
            if config.resume_from:
                trainer = PolicyTrainer.resume(config.resume_from, self.source, self.target)
            else:
                trainer = PolicyTrainer(self.train_config, self.source, self.target)
            write_json_file(config.effective_config_file_path, trainer.config.to_dict())

            policy, report = trainer.run(checkpoint_path=config.checkpoint_file_path,
                                         checkpoint_every=config.checkpoint_every)
            trainer.save_checkpoint(config.checkpoint_file_path)
            save_policy(policy, config.policy_file_path)
            write_json_lines(config.report_file_path, (r.to_dict() for r in report.records))
            write_json_file(config.summary_file_path, report.summary_document())
            logging.info(f"Training finished in {report.wall_time_seconds:.1f}s")

            return ModelTrainerArtifact(policy_file_path=config.policy_file_path,
                                        checkpoint_file_path=config.checkpoint_file_path,
                                        report_file_path=config.report_file_path,
                                        summary_file_path=config.summary_file_path,
                                        report=report)
        except Exception as e:
            raise MyException(e, sys) from e
