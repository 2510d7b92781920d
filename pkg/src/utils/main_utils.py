import hashlib
import json
import os
import sys
from typing import Any, Iterable, Mapping

import yaml

from src.exception import DataError, MyException


def read_yaml_file(file_path: str) -> dict:
    """
    Reads a YAML document. JSON documents are valid YAML, so this also reads JSON configs.
    """
    try:
        with open(file_path, "rb") as yaml_file:
            return yaml.safe_load(yaml_file)

    except Exception as e:
        raise MyException(e, sys) from e


def _make_parent(file_path: str) -> None:
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def canonical_json(content: Any) -> str:
    return json.dumps(content, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json_file(file_path: str, content: Any) -> None:
    """Writes canonical JSON (sorted keys, shortest round-trip floats, UTF-8)."""
    try:
        _make_parent(file_path)
        with open(file_path, "w", encoding="utf-8") as file_obj:
            file_obj.write(canonical_json(content))
    except OSError as e:
        raise DataError(f"cannot write {file_path}: {e}", path=file_path) from e


def write_json_lines(file_path: str, rows: Iterable[Mapping[str, Any]]) -> None:
    try:
        _make_parent(file_path)
        with open(file_path, "w", encoding="utf-8") as file_obj:
            for row in rows:
                file_obj.write(json.dumps(row, sort_keys=True, allow_nan=False) + "\n")
    except OSError as e:
        raise DataError(f"cannot write {file_path}: {e}", path=file_path) from e


def read_json_lines(file_path: str) -> list:
    with open(file_path, "r", encoding="utf-8") as file_obj:
        return [json.loads(line) for line in file_obj if line.strip()]


def derive_seed(seed: int, key: str) -> int:
    """64-bit seed from a global seed and a string key (e.g. a file name)."""
    digest = hashlib.sha256(f"{int(seed)}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
