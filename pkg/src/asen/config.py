"""Run configuration: one JSON file plus ``--set key=value`` overrides.

Every field has a default except the master seed. :func:`resolve` returns
the fully populated configuration, which is echoed into each output
directory so a run can be repeated from its outputs alone.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import spectral
from .data import CROP_CLASSES, DEFAULT_FRACTIONS, SyntheticSpec
from .ensemble import ArchitectureRanges, PoolConfig
from .errors import ConfigError
from .mlp import TrainConfig
from .rng import check_seed

DEFAULTS: dict[str, Any] = {
    "seed": None,
    "output_dir": "runs/default",
    "data": {
        "csv": None,
        "synthetic": None,
        "label_column": "label",
        "class_names": list(CROP_CLASSES),
        "band_mapping": dict(spectral.LANDSAT8_COLUMNS),
        "latitude_column": None,
        "longitude_column": None,
        "source_column": None,
    },
    "features": None,
    "split": {"fractions": list(DEFAULT_FRACTIONS)},
    "pool": {
        "n_learners": 10,
        "layers": [1, 3],
        "width": [10, 100],
        "dropout": [0.2, 0.6],
        "workers": 1,
        "train": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    },
    "asen": {k: v for k, v in TrainConfig().to_dict().items() if k != "seed"},
    "baselines": {
        "logistic": {"lr": 0.01, "l2": 1e-4, "max_epochs": 100, "batch_size": 32, "patience": 3},
        "svm": {"lr": 0.01, "l2": 1e-4, "max_epochs": 100, "batch_size": 32, "patience": 3},
    },
    "metrics": {"ci_resamples": 1000, "level": 0.95},
    "importance": {"k": 5, "repeats": 10},
}


def _merge(base: dict, override: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, Mapping):
            # nested dicts whose defaults are free-form are replaced wholesale
            if key in ("band_mapping",):
                out[key] = dict(value)
            else:
                out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides:
        keys, value = parse_override(item)
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {item!r}: {k!r} is not a section")
        node[keys[-1]] = value
    return raw


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str
    data: dict
    features: tuple[str, ...]
    fractions: tuple[float, float, float]
    pool: PoolConfig
    workers: int
    asen: TrainConfig
    baselines: dict
    metrics: dict
    importance: dict
    resolved: dict = field(repr=False, default_factory=dict)

    @property
    def synthetic(self) -> SyntheticSpec | None:
        spec = self.data.get("synthetic")
        return None if spec is None else SyntheticSpec.from_dict(spec)

    @property
    def mapping(self) -> spectral.BandMapping:
        return spectral.BandMapping(self.data["band_mapping"])

    @property
    def class_names(self) -> tuple[str, ...] | None:
        names = self.data.get("class_names")
        return None if names is None else tuple(names)


def resolve(raw: Mapping[str, Any] | None = None, overrides: Sequence[str] = (),
            seed: int | None = None) -> RunConfig:
    """Fill defaults, apply overrides and validate."""
    raw = apply_overrides(dict(raw or {}), overrides)
    if seed is not None:
        raw["seed"] = seed
    cfg = _merge(DEFAULTS, raw)
    if cfg["seed"] is None:
        raise ConfigError("the run configuration must set a seed (config 'seed' or --seed)")
    cfg["seed"] = check_seed(cfg["seed"])

    data = cfg["data"]
    if data["csv"] is not None and data["synthetic"] is not None:
        raise ConfigError("configure exactly one dataset source: data.csv or data.synthetic")
    if data["csv"] is None:
        spec = SyntheticSpec.from_dict(data["synthetic"] or {})
        data["synthetic"] = spec.to_dict()
    else:
        spec = None
    if cfg["features"] is None:
        cfg["features"] = list(spectral.DEFAULT_FEATURES) + (list(spec.noise_names) if spec else [])
    extra = [n for n in cfg["features"]
             if n not in spectral.BAND_NAMES and n not in spectral.INDEX_NAMES]
    features = spectral.check_feature_names(cfg["features"], extra)
    if spec is not None and set(extra) - set(spec.noise_names):
        raise ConfigError(f"synthetic data has no columns {sorted(set(extra) - set(spec.noise_names))}")
    mapping = spectral.BandMapping(data["band_mapping"])
    mapping.require(spectral.required_bands(
        [n for n in features if n in spectral.BAND_NAMES or n in spectral.INDEX_NAMES]))

    p = cfg["pool"]
    pool = PoolConfig(
        n_learners=int(p["n_learners"]),
        ranges=ArchitectureRanges(tuple(p["layers"]), tuple(p["width"]), tuple(p["dropout"])),
        train=TrainConfig(**p["train"]),
        seed=cfg["seed"],
    )
    if int(p["workers"]) < 1:
        raise ConfigError("pool.workers must be >= 1")
    asen = TrainConfig(**cfg["asen"])
    fractions = tuple(float(f) for f in cfg["split"]["fractions"])
    if len(fractions) != 3:
        raise ConfigError("split.fractions needs three entries")
    k = int(cfg["importance"]["k"])
    if not 1 <= k <= len(features):
        raise ConfigError(f"importance.k must lie in [1, {len(features)}]")
    return RunConfig(
        seed=cfg["seed"], output_dir=str(cfg["output_dir"]), data=data, features=features,
        fractions=fractions, pool=pool, workers=int(p["workers"]), asen=asen,
        baselines=cfg["baselines"], metrics=cfg["metrics"], importance=cfg["importance"],
        resolved=cfg,
    )


def load(path: str | Path | None, overrides: Sequence[str] = (), seed: int | None = None) -> RunConfig:
    raw = {}
    if path is not None:
        with Path(path).open(encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: configuration must be a JSON object")
        # relative CSV paths are taken relative to the config file
        csv_path = (raw.get("data") or {}).get("csv")
        if csv_path and not Path(csv_path).is_absolute():
            raw["data"]["csv"] = str((Path(path).parent / csv_path).resolve())
    return resolve(raw, overrides, seed)
