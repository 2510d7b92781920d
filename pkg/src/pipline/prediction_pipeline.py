import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.components.data_ingestion import load_folder
from src.components.data_transformation import baseline_stylize
from src.components.model_evaluation import record_seeds
from src.constants import INSPECT_CSV_FILE_NAME, INSPECT_JSON_FILE_NAME, INSPECT_PLOT_FILE_NAME
from src.data_access.image_io import save_ppm
from src.entity.artifact_entity import InspectReport
from src.entity.dataset_entity import DomainDataset, DomainTag, ImageRecord
from src.entity.policy import Policy, load_policy, relaxed_forward, stylize_batch, summary
from src.exception import DataError, MyException, OutputCollisionError, UsageError
from src.logger import logging
from src.utils.main_utils import write_json_file

STYLIZE_MODES: Tuple[str, ...] = ("hard", "relaxed")


def _output_paths(dataset: DomainDataset, input_dir: str, output_dir: str) -> List[str]:
    """Output path per record, mirroring the input layout with a .ppm extension."""
    if os.path.abspath(input_dir) == os.path.abspath(output_dir):
        raise OutputCollisionError("the output directory must differ from the input directory",
                                   input=input_dir, output=output_dir)
    paths = []
    for record in dataset.records:
        relative = os.path.splitext(os.path.relpath(record.source_path, input_dir))[0] + ".ppm"
        paths.append(os.path.join(output_dir, relative))
    existing = [p for p in paths if os.path.exists(p)]
    if len(set(paths)) != len(paths) or existing:
        raise OutputCollisionError(f"{len(existing) or 'some'} output files would be overwritten",
                                   existing=existing[:20])
    return paths


def _write_records(records: Sequence[ImageRecord], paths: Sequence[str]) -> None:
    for record, path in zip(records, paths):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        save_ppm(record, path)


class StylizationPipeline:
    """
    Stylizes every image of a folder with a trained policy. Each image has its
    own random stream derived from (seed, path relative to the input folder).
    """

    def __init__(self, policy: Policy, input_dir: str, output_dir: str, seed: int,
                 mode: str = "hard", workers: int = 4):
        try:
            if mode not in STYLIZE_MODES:
                raise UsageError(f"unknown stylize mode {mode!r}", mode=mode, known=list(STYLIZE_MODES))
            self.policy = policy
            self.input_dir = input_dir
            self.output_dir = output_dir
            self.seed = seed
            self.mode = mode
            self.workers = workers
        except Exception as e:
            raise MyException(e, sys) from e

    @classmethod
    def from_policy_file(cls, policy_path: str, *args, **kwargs) -> "StylizationPipeline":
        return cls(load_policy(policy_path), *args, **kwargs)

    def stylize(self, dataset: DomainDataset) -> np.ndarray:
        keyed = [ImageRecord(r.image, r.label, os.path.relpath(r.source_path, self.input_dir))
                 for r in dataset.records]
        seeds = record_seeds(keyed, self.seed)
        images = [r.image for r in dataset.records]
        if self.mode == "hard":
            return stylize_batch(self.policy, images, seeds, workers=self.workers)
        return np.stack([np.clip(relaxed_forward(self.policy, image, np.random.default_rng(s)).numpy(), 0.0, 1.0)
                         for image, s in zip(images, seeds)])

    def initiate_stylization(self) -> List[str]:
        try:
            logging.info(f"Stylizing {self.input_dir} into {self.output_dir} ({self.mode} mode)")
            dataset = load_folder(self.input_dir, DomainTag.SOURCE)
            paths = _output_paths(dataset, self.input_dir, self.output_dir)
            stylized = self.stylize(dataset)
            _write_records([ImageRecord(image, r.label, r.source_path)
                            for image, r in zip(stylized, dataset.records)], paths)
            logging.info(f"Wrote {len(paths)} stylized images")
            return paths
        except Exception as e:
            raise MyException(e, sys) from e


class BaselinePipeline:
    def __init__(self, kind: str, input_dir: str, output_dir: str):
        self.kind = kind
        self.input_dir = input_dir
        self.output_dir = output_dir

    def initiate_baseline(self) -> List[str]:
        try:
            logging.info(f"Applying the {self.kind} baseline to {self.input_dir}")
            dataset = load_folder(self.input_dir, DomainTag.SOURCE)
            paths = _output_paths(dataset, self.input_dir, self.output_dir)
            _write_records([baseline_stylize(self.kind, r) for r in dataset.records], paths)
            return paths
        except Exception as e:
            raise MyException(e, sys) from e


def build_inspect_report(policies: Sequence[Policy], labels: Optional[Sequence[str]] = None) -> InspectReport:
    labels = list(labels) if labels else [f"policy{i}" if len(policies) > 1 else "policy"
                                          for i in range(len(policies))]
    if len(labels) != len(policies):
        raise UsageError("give one label per policy", labels=labels, policies=len(policies))
    names = list(policies[0].registry.names)
    expected_count, expected_param, stages = {}, {}, {}
    for label, policy in zip(labels, policies):
        if list(policy.registry.names) != names:
            raise UsageError("policies compared together must share one registry", label=label)
        result = summary(policy)
        expected_count[label] = [float(v) for v in result.expected_count]
        expected_param[label] = [float(v) for v in result.expected_param]
        probs = policy.select_probs()
        rows = []
        for k, stage in enumerate(policy.stages):
            n = int(np.argmax(probs[k]))
            rows.append({"stage": k, "op_name": names[n], "select_prob": float(probs[k, n]),
                         "p": float(stage.p[n]),
                         "mu01": float(stage.mu01[n]) if policy.registry.descriptor(n).has_param else None})
        stages[label] = rows
    return InspectReport(labels, names, expected_count, expected_param, stages)


def inspect_frame(report: InspectReport) -> pd.DataFrame:
    return pd.DataFrame(report.rows())


def plot_inspect_report(report: InspectReport, path: str) -> str:
    """Grouped bar charts of expected counts and expected parameters per op."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 1, figsize=(max(6, len(report.op_names)), 6), sharex=True)
    x = np.arange(len(report.op_names))
    width = 0.8 / len(report.labels)
    for i, label in enumerate(report.labels):
        axes[0].bar(x + i * width, report.expected_count[label], width, label=label)
        axes[1].bar(x + i * width, report.expected_param[label], width, label=label)
    axes[0].set_ylabel("expected count")
    axes[1].set_ylabel("expected parameter")
    axes[1].set_xticks(x + width * (len(report.labels) - 1) / 2)
    axes[1].set_xticklabels(report.op_names, rotation=30, ha="right")
    if len(report.labels) > 1:
        axes[0].legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logging.info(f"Inspect chart written to {path}")
    return path


def emit_report(report, path: str, format: str = "json") -> None:
    """
    Writes a report as canonical JSON, or as CSV rows (op_name, expected_count,
    expected_param) when the report has rows.
    """
    if format == "json":
        document = report.to_dict() if hasattr(report, "to_dict") else report
        write_json_file(path, document)
    elif format == "csv":
        rows = report.rows() if hasattr(report, "rows") else list(report)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        try:
            pd.DataFrame(rows).to_csv(path, index=False)
        except OSError as e:
            raise DataError(f"cannot write {path}: {e}", path=path) from e
    else:
        raise UsageError(f"unknown report format {format!r}", format=format)
    logging.info(f"Report written to {path}")


def load_policies(paths: Sequence[str]) -> List[Policy]:
    return [load_policy(p) for p in paths]


def inspect_policies(paths: Sequence[str], output_dir: str, labels: Optional[Sequence[str]] = None,
                     plot: bool = False) -> Dict[str, str]:
    report = build_inspect_report(load_policies(paths), labels)
    written = {"json": os.path.join(output_dir, INSPECT_JSON_FILE_NAME),
               "csv": os.path.join(output_dir, INSPECT_CSV_FILE_NAME)}
    emit_report(report, written["json"], "json")
    emit_report(report, written["csv"], "csv")
    if plot:
        written["plot"] = plot_inspect_report(report, os.path.join(output_dir, INSPECT_PLOT_FILE_NAME))
    return written
