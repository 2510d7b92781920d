import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from src.constants import *
from src.exception import UsageError

BACKENDS: Tuple[str, ...] = ("sliced", "critic")
MODES: Tuple[str, ...] = ("stylization", "augmentation")


@dataclass
class TrainConfig:
    k: int = DEFAULT_NUM_STAGES
    steps: int = TRAINER_STEPS
    batch_size: int = TRAINER_BATCH_SIZE
    lr_policy: float = TRAINER_LR_POLICY
    lr_critic: float = TRAINER_LR_CRITIC
    lr_task: float = TRAINER_LR_TASK
    epsilon: float = TRAINER_EPSILON
    backend: str = TRAINER_BACKEND
    projections: int = TRAINER_PROJECTIONS
    tau_select_schedule: Tuple[float, float] = TRAINER_TAU_SELECT_SCHEDULE
    tau_gate_schedule: Tuple[float, float] = TRAINER_TAU_GATE_SCHEDULE
    seed: int = TRAINER_SEED
    supervised: bool = False
    mix_ratio: Tuple[int, int] = TRAINER_MIX_RATIO
    mode: str = "stylization"
    n_critic: int = CRITIC_STEPS_PER_POLICY_STEP
    clip_value: float = CRITIC_CLIP_VALUE
    working_resolution: int = WORKING_RESOLUTION
    log_every: int = TRAINER_LOG_EVERY

    def __post_init__(self):
        self.tau_select_schedule = tuple(float(v) for v in self.tau_select_schedule)
        self.tau_gate_schedule = tuple(float(v) for v in self.tau_gate_schedule)
        self.mix_ratio = tuple(int(v) for v in self.mix_ratio)

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise UsageError(f"unknown TrainConfig fields {unknown}", unknown=unknown)
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        for key in ("tau_select_schedule", "tau_gate_schedule", "mix_ratio"):
            values[key] = list(values[key])
        return values

    def updated(self, **overrides: Any) -> "TrainConfig":
        values = asdict(self)
        values.update({key: value for key, value in overrides.items() if value is not None})
        return TrainConfig.from_dict(values)

    def validate(self) -> "TrainConfig":
        problems = []
        if self.k < 1:
            problems.append("k must be >= 1")
        if self.steps < 1:
            problems.append("steps must be >= 1")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.lr_policy < 0:
            problems.append("lr_policy must be >= 0")
        if self.lr_critic <= 0 or self.lr_task <= 0:
            problems.append("lr_critic and lr_task must be > 0")
        if self.epsilon < 0:
            problems.append("epsilon must be >= 0")
        if self.backend not in BACKENDS:
            problems.append(f"backend must be one of {list(BACKENDS)}")
        if self.mode not in MODES:
            problems.append(f"mode must be one of {list(MODES)}")
        if self.projections < 1:
            problems.append("projections must be >= 1")
        if len(self.tau_select_schedule) != 2 or len(self.tau_gate_schedule) != 2:
            problems.append("temperature schedules are (start, end) pairs")
        elif min(self.tau_select_schedule + self.tau_gate_schedule) <= 0:
            problems.append("temperatures must be > 0")
        if len(self.mix_ratio) != 2 or min(self.mix_ratio) < 0 or sum(self.mix_ratio) < 1:
            problems.append("mix_ratio is a pair of non-negative ints with a positive sum")
        if self.n_critic < 1 or self.clip_value <= 0:
            problems.append("n_critic must be >= 1 and clip_value > 0")
        if self.working_resolution < 1 or self.log_every < 1:
            problems.append("working_resolution and log_every must be >= 1")
        if problems:
            raise UsageError("invalid training configuration: " + "; ".join(problems), problems=problems)
        return self


@dataclass
class DataIngestionConfig:
    source_dir: str
    target_dir: str
    working_resolution: int = WORKING_RESOLUTION


@dataclass
class ModelTrainerConfig:
    output_dir: str
    policy_file_path: str = ""
    checkpoint_file_path: str = ""
    report_file_path: str = ""
    summary_file_path: str = ""
    effective_config_file_path: str = ""
    checkpoint_every: int = 0
    resume_from: Optional[str] = None

    def __post_init__(self):
        self.policy_file_path = self.policy_file_path or os.path.join(self.output_dir, POLICY_FILE_NAME)
        self.checkpoint_file_path = self.checkpoint_file_path or os.path.join(self.output_dir, CHECKPOINT_FILE_NAME)
        self.report_file_path = self.report_file_path or os.path.join(self.output_dir, TRAIN_REPORT_FILE_NAME)
        self.summary_file_path = self.summary_file_path or os.path.join(self.output_dir, TRAIN_SUMMARY_FILE_NAME)
        self.effective_config_file_path = (self.effective_config_file_path
                                           or os.path.join(self.output_dir, EFFECTIVE_CONFIG_FILE_NAME))


@dataclass
class ModelEvaluationConfig:
    num_images: int = EVALUATION_NUM_IMAGES
    projections: int = EVALUATION_PROJECTIONS
    seed: int = EVALUATION_SEED
    report_file_path: Optional[str] = None


@dataclass
class SynthSpec:
    image_size: int = SYNTH_IMAGE_SIZE
    num_images: int = SYNTH_NUM_IMAGES
    num_classes: int = SYNTH_NUM_CLASSES
    hidden_policy: Tuple[Tuple[str, Optional[float]], ...] = SYNTH_HIDDEN_POLICY
    noise_sigma: float = SYNTH_NOISE_SIGMA

    def __post_init__(self):
        self.hidden_policy = tuple((str(name), None if value is None else float(value))
                                   for name, value in self.hidden_policy)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["hidden_policy"] = [[name, value] for name, value in self.hidden_policy]
        return values


@dataclass
class CommandSpec:
    command: str
    config_path: Optional[str] = None
    flags: Dict[str, Any] = field(default_factory=dict)
