import os
import sys
from typing import Any, Dict, Optional

from src.exception import MyException
from src.logger import logging

from src.components.data_ingestion import DataIngestion
from src.components.data_validation import DataValidation
from src.components.model_trainer import ModelTrainer
from src.components.model_evaluation import ModelEvaluation
from src.constants import EVALUATION_REPORT_FILE_NAME

from src.entity.config_entity import (DataIngestionConfig,
                                      ModelEvaluationConfig,
                                      ModelTrainerConfig,
                                      TrainConfig)

from src.entity.artifact_entity import (DataIngestionArtifact,
                                        DataValidationArtifact,
                                        ModelEvaluationArtifact,
                                        ModelTrainerArtifact)
from src.entity.policy import load_policy


class TrainPipeline:
    """
    Folders in, policy out: ingestion, validation, training and an optional
    comparison with the hand-crafted baselines. Every artifact lands in
    ``output_dir``.
    """

    def __init__(self,
                 train_config: TrainConfig,
                 output_dir: str,
                 source_dir: Optional[str] = None,
                 target_dir: Optional[str] = None,
                 config_document: Optional[Dict[str, Any]] = None,
                 resume_from: Optional[str] = None,
                 checkpoint_every: int = 0,
                 evaluate: bool = False):
        self.train_config = train_config
        self.config_document = config_document
        self.evaluate = evaluate
        self.data_ingestion_config = (
            DataIngestionConfig(source_dir=source_dir, target_dir=target_dir,
                                working_resolution=train_config.working_resolution)
            if source_dir and target_dir else None)
        self.model_trainer_config = ModelTrainerConfig(output_dir=output_dir, resume_from=resume_from,
                                                       checkpoint_every=checkpoint_every)
        self.model_evaluation_config = ModelEvaluationConfig(
            report_file_path=os.path.join(output_dir, EVALUATION_REPORT_FILE_NAME))

    def start_data_ingestion(self) -> DataIngestionArtifact:
        """Reads both domain folders at the working resolution."""
        try:
            if self.data_ingestion_config is None:
                raise ValueError("TrainPipeline needs source_dir and target_dir to read folders")
            logging.info(f"Reading domains {self.data_ingestion_config.source_dir} -> "
                         f"{self.data_ingestion_config.target_dir}")
            return DataIngestion(data_ingestion_config=self.data_ingestion_config).initiate_data_ingestion()
        except Exception as e:
            raise MyException(e, sys)

    def start_data_validation(self, data_ingestion_artifact: DataIngestionArtifact) -> DataValidationArtifact:
        """Raw config document against the schema, then config invariants and dataset shapes and labels."""
        try:
            data_validation = DataValidation(train_config=self.train_config,
                                             data_ingestion_artifact=data_ingestion_artifact)
            data_validation.validate_config(self.config_document)
            return data_validation.initiate_data_validation()
        except Exception as e:
            raise MyException(e, sys)

    def start_model_trainer(self, data_ingestion_artifact: DataIngestionArtifact) -> ModelTrainerArtifact:
        try:
            model_trainer = ModelTrainer(model_trainer_config=self.model_trainer_config,
                                         train_config=self.train_config,
                                         source=data_ingestion_artifact.source,
                                         target=data_ingestion_artifact.target)
            model_trainer_artifact = model_trainer.initiate_model_trainer()
            logging.info(f"Policy written to {model_trainer_artifact.policy_file_path}")
            return model_trainer_artifact
        except Exception as e:
            raise MyException(e, sys)

    def start_model_evaluation(self, data_ingestion_artifact: DataIngestionArtifact,
                               model_trainer_artifact: ModelTrainerArtifact) -> ModelEvaluationArtifact:
        """Scores the saved policy (reloaded from disk) against the baselines on the same samples."""
        try:
            model_evaluation = ModelEvaluation(model_evaluation_config=self.model_evaluation_config,
                                               source=data_ingestion_artifact.source,
                                               target=data_ingestion_artifact.target,
                                               policy=load_policy(model_trainer_artifact.policy_file_path))
            return model_evaluation.initiate_model_evaluation()
        except Exception as e:
            raise MyException(e, sys)

    def run_pipeline(self, data_ingestion_artifact: Optional[DataIngestionArtifact] = None) -> ModelTrainerArtifact:
        """
        Runs every stage in order. Pass ``data_ingestion_artifact`` to train on
        datasets already in memory instead of reading folders.
        """
        try:
            if data_ingestion_artifact is None:
                data_ingestion_artifact = self.start_data_ingestion()
            self.start_data_validation(data_ingestion_artifact=data_ingestion_artifact)
            model_trainer_artifact = self.start_model_trainer(data_ingestion_artifact=data_ingestion_artifact)
            if self.evaluate:
                evaluation = self.start_model_evaluation(data_ingestion_artifact=data_ingestion_artifact,
                                                         model_trainer_artifact=model_trainer_artifact)
                logging.info(f"Policy / identity distance ratio: {evaluation.ratio_to_identity}")
            return model_trainer_artifact
        except Exception as e:
            raise MyException(e, sys)
