"""
Synthetic end-to-end run: generate two domains with a known hidden policy,
train a policy on them, then compare it with the hand-crafted baselines.
"""
import os
import sys

from src.components.synthetic_data import SyntheticData
from src.constants import CONFIG_FILE_PATH
from src.entity.artifact_entity import DataIngestionArtifact
from src.entity.config_entity import SynthSpec, TrainConfig
from src.pipline.prediction_pipeline import inspect_policies
from src.pipline.training_pipeline import TrainPipeline
from src.utils.main_utils import read_yaml_file

output_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join("artifact", "demo")

source, target, _ = SyntheticData(SynthSpec(num_images=256), seed=0,
                                  output_dir=os.path.join(output_dir, "data")).initiate_synthetic_data()
config = TrainConfig.from_dict(read_yaml_file(CONFIG_FILE_PATH)).updated(steps=300, k=2)
pipeline = TrainPipeline(train_config=config, output_dir=os.path.join(output_dir, "run"), evaluate=True)
artifact = pipeline.run_pipeline(DataIngestionArtifact(source=source, target=target))
inspect_policies([artifact.policy_file_path], os.path.join(output_dir, "run"), plot=True)
