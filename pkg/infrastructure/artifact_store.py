"""
Artifact store for celltune runs
CSV traces and metrics, model checkpoints (JSON header + row-major arrays)
and the trace digests used to check reproducibility.
"""
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np
from jsonschema import ValidationError, validate
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "celltune-checkpoint"
CHECKPOINT_VERSION = 1

CHECKPOINT_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "kind", "arrays", "seed", "hyperparameters"],
    "properties": {
        "format": {"const": CHECKPOINT_FORMAT},
        "version": {"const": CHECKPOINT_VERSION},
        "kind": {"enum": ["qtable", "dqn"]},
        "arrays": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "shape"],
                "properties": {
                    "name": {"type": "string"},
                    "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "hyperparameters": {"type": "object"},
    },
}


class ArtifactWriteError(OSError):
    """A run artifact could not be written after retries."""

    def __init__(self, run_id: str, path: Union[str, Path], cause: Exception):
        super().__init__(f"run {run_id}: could not write {path}: {cause}")
        self.run_id = run_id
        self.path = Path(path)


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint file."""


@dataclass
class Checkpoint:
    kind: str
    arrays: Dict[str, np.ndarray]
    seed: int
    hyperparameters: Dict[str, Any]


@retry(stop=stop_after_attempt(3), wait=wait_exponential(multiplier=0.1, min=0.1, max=1),
       retry=retry_if_exception_type(OSError), reraise=True)
def _write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def write_artifact(path: Union[str, Path], data: bytes, run_id: str = "-") -> Path:
    path = Path(path)
    try:
        _write_bytes(path, data)
    except OSError as e:
        logger.error(f"❌ Artifact write failed for run {run_id}: {path}")
        raise ArtifactWriteError(run_id, path, e) from e
    return path


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue().encode("utf-8")


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def trace_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    return trace_digest(Path(path).read_bytes())


def save_checkpoint(path: Union[str, Path], kind: str, arrays: Mapping[str, np.ndarray], seed: int,
                    hyperparameters: Dict[str, Any], run_id: str = "-") -> Path:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "arrays": [{"name": name, "shape": list(np.shape(a))} for name, a in arrays.items()],
        "seed": int(seed),
        "hyperparameters": hyperparameters,
    }
    validate(instance=header, schema=CHECKPOINT_SCHEMA)
    lines = [json.dumps(header, sort_keys=True)]
    for array in arrays.values():
        lines.append(" ".join(repr(float(v)) for v in np.asarray(array, dtype=float).ravel(order="C")))
    written = write_artifact(path, ("\n".join(lines) + "\n").encode("utf-8"), run_id)
    logger.info(f"💾 Checkpoint ({kind}) written to {written}")
    return written


def load_checkpoint(path: Union[str, Path], expected_kind: str = None) -> Checkpoint:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not lines:
        raise CheckpointError(f"checkpoint {path} is empty")
    try:
        header = json.loads(lines[0])
        validate(instance=header, schema=CHECKPOINT_SCHEMA)
    except (json.JSONDecodeError, ValidationError) as e:
        raise CheckpointError(f"invalid checkpoint header in {path}: {e}") from e
    if expected_kind is not None and header["kind"] != expected_kind:
        raise CheckpointError(f"checkpoint {path} holds a {header['kind']}, expected {expected_kind}")

    specs = header["arrays"]
    body = lines[1:]
    if len(body) != len(specs):
        raise CheckpointError(f"checkpoint {path} declares {len(specs)} arrays but holds {len(body)}")
    arrays: Dict[str, np.ndarray] = {}
    for spec, line in zip(specs, body):
        values = np.array([float(v) for v in line.split()], dtype=float)
        shape = tuple(spec["shape"])
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"array {spec['name']} in {path}: {values.size} values for shape {shape}")
        arrays[spec["name"]] = values.reshape(shape)
    return Checkpoint(kind=header["kind"], arrays=arrays, seed=header["seed"],
                      hyperparameters=header["hyperparameters"])


def qtable_csv_bytes(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=float)
    header = ["state"] + [f"a{k}" for k in range(values.shape[1])]
    return csv_bytes(header, ([f"s{s}"] + list(row) for s, row in enumerate(values)))


def read_csv_rows(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
