import sys
from typing import Any, Dict, List, Optional

from src.constants import SCHEMA_FILE_PATH
from src.entity.artifact_entity import DataIngestionArtifact, DataValidationArtifact
from src.entity.config_entity import TrainConfig
from src.entity.dataset_entity import DomainDataset
from src.exception import DataError, EmptyDatasetError, MissingLabelsError, MyException, UsageError
from src.logger import logging
from src.utils.main_utils import read_yaml_file


def _matches(value: Any, kind: str) -> bool:
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "pair":
        return (isinstance(value, (list, tuple)) and len(value) == 2
                and all(_matches(v, "float") for v in value))
    return False


def validate_config_document(document: Dict[str, Any], schema: Dict[str, str]) -> List[str]:
    """Returns the problems found in a TrainConfig document (empty when valid)."""
    problems = []
    for key, value in document.items():
        if key not in schema:
            problems.append(f"unknown field {key!r}")
        elif not _matches(value, schema[key]):
            problems.append(f"field {key!r} should be {schema[key]}, got {value!r}")
    return problems


def validate_datasets(source: DomainDataset, target: DomainDataset, supervised: bool) -> None:
    for name, dataset in (("source", source), ("target", target)):
        if len(dataset) == 0:
            raise EmptyDatasetError(f"the {name} dataset is empty", domain=name)
    shapes = {r.image.shape for r in source.records} | {r.image.shape for r in target.records}
    if len(shapes) != 1:
        raise DataError("all images must share one shape; resize to the working resolution first",
                        shapes=sorted(list(s) for s in shapes))
    if supervised:
        unlabeled = [name for name, d in (("source", source), ("target", target)) if not d.labeled]
        if unlabeled:
            raise MissingLabelsError(f"supervised training needs labels in {unlabeled}", domains=unlabeled)
        if source.class_names != target.class_names:
            raise DataError("source and target must share class names",
                            source=list(source.class_names), target=list(target.class_names))


class DataValidation:
    def __init__(self, train_config: TrainConfig,
                 data_ingestion_artifact: Optional[DataIngestionArtifact] = None,
                 schema_file_path: str = SCHEMA_FILE_PATH):
        """
        :param train_config: TrainConfig
            The effective training configuration.
        :param data_ingestion_artifact: DataIngestionArtifact
            Source and target datasets to check.
        """
        try:
            self.train_config = train_config
            self.data_ingestion_artifact = data_ingestion_artifact
            self.schema_info = read_yaml_file(schema_file_path)
        except Exception as e:
            raise MyException(e, sys)

    def validate_config(self, document: Optional[Dict[str, Any]] = None) -> None:
        """Checks a raw config document against the schema, then the config invariants."""
        if document is not None:
            problems = validate_config_document(document, self.schema_info["train_config"])
            if problems:
                raise UsageError("config file does not match the schema: " + "; ".join(problems),
                                 problems=problems)
        self.train_config.validate()

    def initiate_data_validation(self) -> DataValidationArtifact:
        """
        Method Name: initiate_data_validation
        Description: Validates the configuration and both datasets.

        Output: Returns DataValidationArtifact
        On Failure: Raise Exception
        """
        try:
            logging.info("Starting data validation")
            self.validate_config()
            artifact = self.data_ingestion_artifact
            report = {"config": "ok"}
            if artifact is not None:
                validate_datasets(artifact.source, artifact.target, self.train_config.supervised)
                report.update(source_images=len(artifact.source), target_images=len(artifact.target),
                              image_shape=list(artifact.source.image_shape))
            data_validation_artifact = DataValidationArtifact(validation_status=True, message="",
                                                              validation_report=report)
            logging.info(f"Data validation artifact: {data_validation_artifact}")
            return data_validation_artifact
        except Exception as e:
            raise MyException(e, sys) from e
