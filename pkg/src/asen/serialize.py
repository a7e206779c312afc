"""JSON file helpers and model-document loading.

Floats are written with Python's shortest round-trip repr, so reading a
file back reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import ConfigError


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_json(path: str | Path) -> Any:
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)


def load_model(path: str | Path):
    """Load any model document written by this package, dispatching on ``kind``."""
    from .baselines import LinearClassifier
    from .ensemble import AsenClassifier, BaseLearner
    from .mlp import MlpModel

    doc = read_json(path)
    kind = doc.get("kind")
    if kind == "asen":
        return AsenClassifier.from_dict(doc)
    if kind == "linear":
        return LinearClassifier.from_dict(doc)
    if kind == "mlp":
        return BaseLearner.from_dict(doc) if "learner" in doc else MlpModel.from_dict(doc)
    raise ConfigError(f"{path}: unknown model kind {kind!r}")
