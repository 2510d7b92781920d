"""
Command line surface: train, stylize, inspect, baseline, distance and synth-gen.

Every command prints one canonical JSON document on stdout. Failures print a
single JSON line ``{"error": kind, "message": ..., "details": ...}`` on stderr
and exit with 1 (usage), 2 (data) or 3 (numeric).
"""
import argparse
import json
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from src.components.data_ingestion import load_folder
from src.components.data_transformation import BASELINE_KINDS
from src.components.data_validation import validate_config_document
from src.components.model_evaluation import compare_stylizers, dataset_distance
from src.components.synthetic_data import SyntheticData
from src.constants import (DEFAULT_WORKERS, EVALUATION_NUM_IMAGES, EVALUATION_PROJECTIONS,
                           EVALUATION_SEED, EXIT_OK, EXIT_USAGE, SCHEMA_FILE_PATH, STYLIZE_SEED,
                           SYNTH_HIDDEN_POLICY, SYNTH_IMAGE_SIZE, SYNTH_NOISE_SIGMA,
                           SYNTH_NUM_CLASSES, SYNTH_NUM_IMAGES, WORKING_RESOLUTION)
from src.entity.config_entity import BACKENDS, MODES, CommandSpec, ModelEvaluationConfig, SynthSpec, TrainConfig
from src.entity.dataset_entity import DomainTag
from src.entity.policy import load_policy
from src.exception import DataError, MyException, StylizerError, UsageError
from src.logger import logging
from src.pipline.prediction_pipeline import (STYLIZE_MODES, BaselinePipeline, StylizationPipeline,
                                             emit_report, inspect_policies)
from src.pipline.training_pipeline import TrainPipeline
from src.utils.main_utils import canonical_json, read_yaml_file

__all__ = ["COMMANDS", "build_parser", "parse_command", "effective_train_config", "run", "main", "emit_report"]

# Flags that override TrainConfig fields of the same name
TRAIN_FLAG_FIELDS: Tuple[str, ...] = ("seed", "steps", "epsilon", "backend", "projections", "k",
                                      "supervised", "mode", "batch_size")


class _Parser(argparse.ArgumentParser):
    """argparse reports problems through UsageError instead of exiting with status 2."""

    def error(self, message: str):
        raise UsageError(message, prog=self.prog)


def _train_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--source", required=True, help="source domain folder")
    parser.add_argument("--target", required=True, help="target domain folder")
    parser.add_argument("--output", required=True, help="directory receiving the policy, checkpoint and reports")
    parser.add_argument("--config", help="YAML or JSON document of TrainConfig fields")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--backend", choices=BACKENDS)
    parser.add_argument("--projections", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--supervised", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--resume", help="checkpoint to continue from")
    parser.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=0)
    parser.add_argument("--evaluate", action="store_true", help="also compare the policy with the baselines")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ir-stylize", description="Learn and apply RGB to IR-like stylization policies.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _train_arguments(commands.add_parser("train", help="train a stylization policy"))

    stylize = commands.add_parser("stylize", help="stylize a folder with a trained policy")
    stylize.add_argument("--policy", required=True)
    stylize.add_argument("--input", required=True)
    stylize.add_argument("--output", required=True)
    stylize.add_argument("--seed", type=int, default=STYLIZE_SEED)
    stylize.add_argument("--mode", choices=STYLIZE_MODES, default="hard")
    stylize.add_argument("--workers", type=int, default=DEFAULT_WORKERS)

    inspect = commands.add_parser("inspect", help="summarize one or more policies")
    inspect.add_argument("--policy", required=True, action="append", help="repeat to compare policies")
    inspect.add_argument("--labels", nargs="+")
    inspect.add_argument("--output", required=True)
    inspect.add_argument("--plot", action="store_true")

    baseline = commands.add_parser("baseline", help="apply a hand-crafted baseline to a folder")
    baseline.add_argument("--kind", required=True, choices=BASELINE_KINDS)
    baseline.add_argument("--input", required=True)
    baseline.add_argument("--output", required=True)

    distance = commands.add_parser("distance", help="sliced Wasserstein distance between two folders")
    distance.add_argument("first")
    distance.add_argument("second")
    distance.add_argument("--projections", type=int, default=EVALUATION_PROJECTIONS)
    distance.add_argument("--seed", type=int, default=EVALUATION_SEED)
    distance.add_argument("--num-images", dest="num_images", type=int, default=EVALUATION_NUM_IMAGES)
    distance.add_argument("--compare-baselines", dest="compare_baselines", action="store_true")
    distance.add_argument("--policy", help="policy added to the baseline comparison")

    synth = commands.add_parser("synth-gen", help="write synthetic source and target domains")
    synth.add_argument("--output", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--image-size", dest="image_size", type=int, default=SYNTH_IMAGE_SIZE)
    synth.add_argument("--num-images", dest="num_images", type=int, default=SYNTH_NUM_IMAGES)
    synth.add_argument("--num-classes", dest="num_classes", type=int, default=SYNTH_NUM_CLASSES)
    synth.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=SYNTH_NOISE_SIGMA)
    synth.add_argument("--hidden-op", dest="hidden_op", action="append",
                       help="op name, or name=physical value; repeat in application order")
    return parser


def parse_command(argv: Optional[Sequence[str]] = None) -> CommandSpec:
    namespace = vars(build_parser().parse_args(argv))
    command = namespace.pop("command")
    config_path = namespace.pop("config", None)
    return CommandSpec(command=command, config_path=config_path, flags=namespace)


def effective_train_config(spec: CommandSpec) -> Tuple[TrainConfig, Optional[Dict[str, Any]]]:
    """Defaults, then the config file, then flags."""
    document = None
    values: Dict[str, Any] = {}
    if spec.config_path:
        if not os.path.isfile(spec.config_path):
            raise UsageError(f"config file {spec.config_path} does not exist", path=spec.config_path)
        try:
            document = read_yaml_file(spec.config_path) or {}
        except MyException as e:
            raise UsageError(f"cannot parse config file {spec.config_path}: {e.cause}", path=spec.config_path) from e
        if not isinstance(document, dict):
            raise UsageError("a config file holds a mapping of TrainConfig fields", path=spec.config_path)
        problems = validate_config_document(document, read_yaml_file(SCHEMA_FILE_PATH)["train_config"])
        if problems:
            raise UsageError("config file does not match the schema: " + "; ".join(problems), problems=problems)
        values.update(document)
    config = TrainConfig.from_dict(values)
    overrides = {name: spec.flags.get(name) for name in TRAIN_FLAG_FIELDS}
    return config.updated(**overrides).validate(), document


def _hidden_policy(entries: Optional[Sequence[str]]) -> Tuple[Tuple[str, Optional[float]], ...]:
    if not entries:
        return SYNTH_HIDDEN_POLICY
    hidden: List[Tuple[str, Optional[float]]] = []
    for entry in entries:
        name, _, value = entry.partition("=")
        try:
            hidden.append((name, float(value) if value else None))
        except ValueError as e:
            raise UsageError(f"cannot read hidden op {entry!r}", entry=entry) from e
    return tuple(hidden)


def _train(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    config, document = effective_train_config(spec)
    logging.info(f"Effective training config: {config.to_dict()}")
    pipeline = TrainPipeline(train_config=config, output_dir=flags["output"],
                             source_dir=flags["source"], target_dir=flags["target"],
                             config_document=document, resume_from=flags.get("resume"),
                             checkpoint_every=flags.get("checkpoint_every") or 0,
                             evaluate=bool(flags.get("evaluate")))
    artifact = pipeline.run_pipeline()
    return {"policy": artifact.policy_file_path,
            "checkpoint": artifact.checkpoint_file_path,
            "report": artifact.report_file_path,
            "summary": artifact.report.summary_document()}


def _stylize(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    pipeline = StylizationPipeline.from_policy_file(flags["policy"], flags["input"], flags["output"],
                                                    seed=flags["seed"], mode=flags["mode"],
                                                    workers=flags["workers"])
    written = pipeline.initiate_stylization()
    return {"written": len(written), "output": flags["output"]}


def _inspect(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    return inspect_policies(flags["policy"], flags["output"], flags.get("labels"), plot=flags["plot"])


def _baseline(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    written = BaselinePipeline(flags["kind"], flags["input"], flags["output"]).initiate_baseline()
    return {"written": len(written), "output": flags["output"]}


def _distance(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    config = ModelEvaluationConfig(num_images=flags["num_images"], projections=flags["projections"],
                                   seed=flags["seed"])
    first = load_folder(flags["first"], DomainTag.SOURCE, WORKING_RESOLUTION)
    second = load_folder(flags["second"], DomainTag.TARGET, WORKING_RESOLUTION)
    if flags["compare_baselines"]:
        policy = load_policy(flags["policy"]) if flags.get("policy") else None
        return {"distances": compare_stylizers(first, second, policy, config)}
    if flags.get("policy"):
        raise UsageError("--policy is only used together with --compare-baselines")
    return {"distance": dataset_distance(first, second, config)}


def _synth_gen(spec: CommandSpec) -> Dict[str, Any]:
    flags = spec.flags
    synth_spec = SynthSpec(image_size=flags["image_size"], num_images=flags["num_images"],
                           num_classes=flags["num_classes"], hidden_policy=_hidden_policy(flags.get("hidden_op")),
                           noise_sigma=flags["noise_sigma"])
    _, _, manifest_path = SyntheticData(synth_spec, flags["seed"], flags["output"]).initiate_synthetic_data()
    return {"manifest": manifest_path}


COMMANDS: Dict[str, Callable[[CommandSpec], Dict[str, Any]]] = {
    "train": _train,
    "stylize": _stylize,
    "inspect": _inspect,
    "baseline": _baseline,
    "distance": _distance,
    "synth-gen": _synth_gen,
}


def _report_error(error: Exception) -> int:
    if isinstance(error, (StylizerError, MyException)):
        document, exit_code = error.to_dict(), error.exit_code
    else:
        document = {"error": "internal", "message": str(error), "details": {}}
        exit_code = DataError.exit_code
    sys.stderr.write(json.dumps(document, sort_keys=True, default=str) + "\n")
    return exit_code


def run(spec: CommandSpec) -> int:
    """Runs one command; returns the process exit code."""
    try:
        if spec.command not in COMMANDS:
            raise UsageError(f"unknown command {spec.command!r}", known=sorted(COMMANDS))
        result = COMMANDS[spec.command](spec)
        echoed = {key: value for key, value in spec.flags.items() if value is not None}
        sys.stdout.write(canonical_json({"command": spec.command, "config": spec.config_path,
                                         "flags": echoed, "result": result}))
        return EXIT_OK
    except Exception as e:
        return _report_error(e)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        spec = parse_command(argv)
    except UsageError as e:
        _report_error(e)
        return EXIT_USAGE
    return run(spec)
