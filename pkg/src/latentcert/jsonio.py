"""Deterministic JSON reading and writing.

All artifacts are dumped with sorted keys and a fixed layout so a fixed seed
reproduces files byte for byte. Floats go through Python's shortest
round-trip repr; numpy arrays must be converted with .tolist() by callers.
"""

import json
from pathlib import Path

from .errors import CheckpointError


def dump_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read JSON file {path}: {e}") from e
