import os

PROJECT_DIR: str = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
CONFIG_FILE_PATH = os.path.join(PROJECT_DIR, "config", "train.yaml")
SCHEMA_FILE_PATH = os.path.join(PROJECT_DIR, "config", "schema.yaml")


"""
Tensor engine related constants
"""
DEFAULT_DTYPE: str = "float32"
GRAD_CHECK_DTYPE: str = "float64"
GRAD_CHECK_EPSILON: float = 1e-4
GRAD_CHECK_DENOMINATOR_FLOOR: float = 1e-8


"""
Operation dictionary related constants
"""
SOLARIZE_SHARPNESS: float = 50.0
BLUR_KERNEL_SIZE: int = 5
GAMMA_OFFSET: float = 1e-6
CONTRAST_PIVOT: float = 0.5


"""
Policy related constants
"""
POLICY_FORMAT_VERSION: int = 1
POLICY_INIT_LOGIT_RANGE: float = 0.01
POLICY_INIT_MU01: float = 0.5
DEFAULT_NUM_STAGES: int = 4
DEFAULT_TAU_SELECT: float = 1.0
DEFAULT_TAU_GATE: float = 1.0


"""
Distance and task related constants
"""
LEAKY_SLOPE: float = 0.2
CRITIC_CHANNELS: tuple = (3, 16, 32, 64)
CRITIC_HIDDEN: int = 32
CRITIC_CLIP_VALUE: float = 0.01
CRITIC_STEPS_PER_POLICY_STEP: int = 5
WORKING_RESOLUTION: int = 32


"""
Trainer related constants start with TRAINER VAR NAME
"""
TRAINER_STEPS: int = 2000
TRAINER_BATCH_SIZE: int = 16
TRAINER_LR_POLICY: float = 1e-2
TRAINER_LR_CRITIC: float = 1e-4
TRAINER_LR_TASK: float = 1e-3
TRAINER_EPSILON: float = 0.1
TRAINER_BACKEND: str = "sliced"
TRAINER_PROJECTIONS: int = 64
TRAINER_TAU_SELECT_SCHEDULE: tuple = (1.0, 0.1)
TRAINER_TAU_GATE_SCHEDULE: tuple = (1.0, 0.5)
TRAINER_SEED: int = 7
TRAINER_MIX_RATIO: tuple = (1, 7)
TRAINER_LOG_EVERY: int = 100
ADAM_BETA1: float = 0.9
ADAM_BETA2: float = 0.999
ADAM_EPS: float = 1e-8

CHECKPOINT_MAGIC: bytes = b"STYLCKPT"
CHECKPOINT_FORMAT_VERSION: int = 1


"""
Evaluation related constants start with EVALUATION VAR NAME
"""
EVALUATION_NUM_IMAGES: int = 256
EVALUATION_PROJECTIONS: int = 64
EVALUATION_SEED: int = 1234


"""
Artifact file names
"""
POLICY_FILE_NAME: str = "policy.json"
CHECKPOINT_FILE_NAME: str = "checkpoint.ckpt"
TRAIN_REPORT_FILE_NAME: str = "train_report.jsonl"
TRAIN_SUMMARY_FILE_NAME: str = "train_summary.json"
EFFECTIVE_CONFIG_FILE_NAME: str = "effective_config.json"
EVALUATION_REPORT_FILE_NAME: str = "evaluation_report.json"
INSPECT_JSON_FILE_NAME: str = "inspect.json"
INSPECT_CSV_FILE_NAME: str = "inspect.csv"
INSPECT_PLOT_FILE_NAME: str = "inspect.png"
SYNTH_MANIFEST_FILE_NAME: str = "manifest.json"


"""
Data related constants
"""
PPM_MAXVAL: int = 255
IMAGE_EXTENSIONS: tuple = (".ppm", ".png")
SYNTH_IMAGE_SIZE: int = 32
SYNTH_NUM_IMAGES: int = 512
SYNTH_NUM_CLASSES: int = 2
SYNTH_NOISE_SIGMA: float = 0.01
SYNTH_HIDDEN_POLICY: tuple = (("grayscale", None), ("invert", None))
STYLIZE_SEED: int = 0
DEFAULT_WORKERS: int = 4


"""
Command line exit codes
"""
EXIT_OK: int = 0
EXIT_USAGE: int = 1
EXIT_DATA: int = 2
EXIT_NUMERIC: int = 3
