from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from src.entity.dataset_entity import DomainDataset


@dataclass
class DataIngestionArtifact:
    source: DomainDataset
    target: DomainDataset


@dataclass
class DataValidationArtifact:
    validation_status: bool
    message: str
    validation_report: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StepRecord:
    step: int
    l_d: float
    l_task: float
    l_total: float
    tau_select: float
    tau_gate: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainReport:
    records: List[StepRecord]
    summary: Dict[str, Dict[str, float]]
    wall_time_seconds: float
    counters: Dict[str, int] = field(default_factory=dict)
    effective_config: Dict[str, Any] = field(default_factory=dict)

    def loss_sequence(self, key: str = "l_total") -> List[float]:
        return [getattr(record, key) for record in self.records]

    def summary_document(self) -> Dict[str, Any]:
        """Final summary object; wall time is kept out of it so reruns stay byte-identical."""
        return {
            "steps": len(self.records),
            "final": self.records[-1].to_dict() if self.records else None,
            "policy_summary": self.summary,
            "counters": self.counters,
            "effective_config": self.effective_config,
        }


@dataclass
class ModelTrainerArtifact:
    policy_file_path: str
    checkpoint_file_path: str
    report_file_path: str
    summary_file_path: str
    report: TrainReport


@dataclass
class ModelEvaluationArtifact:
    distances: Dict[str, float]
    identity_distance: float
    policy_distance: Optional[float]
    ratio_to_identity: Optional[float]
    report_file_path: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("report_file_path")
        return values


@dataclass
class InspectReport:
    labels: List[str]
    op_names: List[str]
    expected_count: Dict[str, List[float]]
    expected_param: Dict[str, List[float]]
    stages: Dict[str, List[Dict[str, Any]]]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def rows(self) -> List[Dict[str, Any]]:
        """One row per (policy, op) in registry order."""
        rows = []
        for label in self.labels:
            for n, name in enumerate(self.op_names):
                row = {"op_name": name,
                       "expected_count": self.expected_count[label][n],
                       "expected_param": self.expected_param[label][n]}
                if len(self.labels) > 1:
                    row = {"policy": label, **row}
                rows.append(row)
        return rows
