"""Experiment orchestration behind the command-line tool.

Output layout of one run directory::

    resolved_config.json
    split.json
    models/learner_NN.json   one file per base learner
    models/asen.json         normalizer + pool + attention layer
    models/logistic.json
    models/svm.json
    reports/training.json
    eval/<model>_<split>.json, eval/<model>_<split>_confusion.csv
    importance/...
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path

from . import baselines, data, importance, metrics, serialize, spectral
from .config import RunConfig
from .ensemble import AsenClassifier, fit_asen_classifier
from .errors import ConfigError, LeakGuardError
from .rng import derive_seed

log = logging.getLogger(__name__)


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage: %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------

def load_dataset(cfg: RunConfig, csv_path: str | Path | None = None) -> data.Dataset:
    """The configured dataset, or the CSV at ``csv_path`` read with the configured schema."""
    d = cfg.data
    path = csv_path or d["csv"]
    if path is not None:
        return data.load_csv(path, cfg.features, d["label_column"], cfg.mapping, cfg.class_names,
                             d["latitude_column"], d["longitude_column"], d["source_column"])
    return data.generate_synthetic(cfg.synthetic, cfg.seed, cfg.features)


def make_split(cfg: RunConfig, ds: data.Dataset) -> data.DatasetSplit:
    return data.stratified_split(ds.y, cfg.fractions, cfg.seed, ds.class_names)


def synthetic_csv(spec: data.SyntheticSpec, seed: int, mapping: spectral.BandMapping,
                  label_column: str = "label") -> str:
    bands, extra, y = data.synthetic_bands(spec, seed)
    cols = [mapping.column(b) for b in data.SYNTH_BANDS] + list(extra) + [label_column]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    series = [bands[b] for b in data.SYNTH_BANDS] + list(extra.values())
    for i in range(len(y)):
        w.writerow([repr(float(s[i])) for s in series] + [spec.class_names[y[i]]])
    return buf.getvalue()


def run_synth(cfg: RunConfig, out: str | Path) -> dict:
    spec = cfg.synthetic
    if spec is None:
        raise ConfigError("synth needs a synthetic dataset source (data.synthetic)")
    out = Path(out)
    with _stage("synth"):
        text = synthetic_csv(spec, cfg.seed, cfg.mapping, cfg.data["label_column"])
        csv_path = serialize.write_text(out / "dataset.csv", text)
        sidecar = {
            "seed": cfg.seed,
            "spec": spec.to_dict(),
            "band_mapping": cfg.mapping.to_dict(),
            "rows": sum(spec.counts),
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        }
        serialize.write_json(out / "dataset.provenance.json", sidecar)
        serialize.write_json(out / "resolved_config.json", cfg.resolved)
    log.info("wrote %s (%d rows)", csv_path, sidecar["rows"])
    return sidecar


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    classifier: AsenClassifier
    logistic: baselines.LinearClassifier
    svm: baselines.LinearClassifier
    split: data.DatasetSplit
    files: list[Path]


def _train_baseline(kind: str, cfg: RunConfig, norm, train, val, digest):
    hp = dict(cfg.baselines[kind])
    trainer = baselines.train_logreg if kind == "logistic" else baselines.train_linear_svm
    model, report = trainer(
        data.apply_normalizer(norm, train.X), train.y,
        data.apply_normalizer(norm, val.X), val.y,
        seed=derive_seed(cfg.seed, "baseline", kind), n_classes=train.n_classes, **hp)
    return baselines.LinearClassifier(model, norm, train.feature_names, train.class_names,
                                      digest, report)


def run_train(cfg: RunConfig, out: str | Path | None = None) -> TrainResult:
    out = Path(out or cfg.output_dir)
    serialize.write_json(out / "resolved_config.json", cfg.resolved)
    with _stage("load"):
        ds = load_dataset(cfg)
    with _stage("split"):
        split = make_split(cfg, ds)
        digest = split.digest()
        train, val = ds.subset(split.train), ds.subset(split.val)
        serialize.write_json(out / "split.json", {
            "fractions": list(split.fractions), "sizes": dict(zip(data.SPLIT_ROLES, split.sizes())),
            "digest": digest})
    with _stage("ensemble"):
        clf = fit_asen_classifier(train, val, cfg.pool, cfg.asen, cfg.workers, digest)
    with _stage("baselines"):
        logistic = _train_baseline("logistic", cfg, clf.normalizer, train, val, digest)
        svm = _train_baseline("svm", cfg, clf.normalizer, train, val, digest)
    with _stage("write"):
        files = []
        for i, learner in enumerate(clf.pool.learners):
            files.append(serialize.write_json(out / "models" / f"learner_{i:02d}.json", learner.to_dict()))
        files.append(serialize.write_json(out / "models" / "asen.json", clf.to_dict()))
        files.append(serialize.write_json(out / "models" / "logistic.json", logistic.to_dict()))
        files.append(serialize.write_json(out / "models" / "svm.json", svm.to_dict()))
        serialize.write_json(out / "reports" / "training.json", {
            "pool": clf.reports["pool"], "asen": clf.reports["asen"],
            "logistic": logistic.report.to_dict(), "svm": svm.report.to_dict(),
            "learner_architectures": [
                {"hidden": list(l.config.hidden), "dropout": l.config.dropout,
                 "val_accuracy": l.val_accuracy} for l in clf.pool.learners],
        })
    return TrainResult(clf, logistic, svm, split, files)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def check_split(model, split: data.DatasetSplit, role: str, allow_train: bool) -> None:
    """Refuse evaluation that would leak fitted data into reported metrics."""
    stored = getattr(model, "split_digest", None)
    if stored is None:
        raise LeakGuardError("model file carries no split digest; cannot verify the test split")
    if stored != split.digest():
        raise LeakGuardError(
            "the split recomputed from this dataset and seed does not match the one the model "
            "was trained on; refusing to evaluate")
    if role in ("train", "val") and not allow_train:
        raise LeakGuardError(f"the {role} split was used to fit this model; pass --allow-train "
                             "to evaluate on it anyway")


def run_evaluate(cfg: RunConfig, model_path: str | Path, out: str | Path | None = None,
                 data_path: str | Path | None = None, role: str = "test",
                 allow_train: bool = False) -> metrics.MetricsReport:
    out = Path(out or cfg.output_dir)
    with _stage("load"):
        model = serialize.load_model(model_path)
        if not hasattr(model, "predict"):
            raise ConfigError(f"{model_path} is not an evaluable classifier")
        ds = load_dataset(cfg, data_path)
        if tuple(model.feature_names) != ds.feature_names:
            raise ConfigError(f"model features {model.feature_names} differ from dataset "
                              f"features {ds.feature_names}")
        if tuple(model.class_names) != ds.class_names:
            raise ConfigError("model and dataset disagree on class names")
    with _stage("split"):
        split = make_split(cfg, ds)
        check_split(model, split, role, allow_train)
        part = ds.subset(split.role(role))
    with _stage("evaluate"):
        m = cfg.metrics
        report = importance.evaluate_classifier(
            model, part, ci_resamples=int(m["ci_resamples"]), level=float(m["level"]),
            seed=derive_seed(cfg.seed, "evaluate", role))
        name = Path(model_path).stem
        serialize.write_json(out / "eval" / f"{name}_{role}.json",
                             {"model": name, "split": role, "samples": len(part),
                              **report.to_dict()})
        serialize.write_text(out / "eval" / f"{name}_{role}_confusion.csv", report.confusion.to_csv())
    return report


def summary_header() -> str:
    return "\t".join(["model", *metrics.SUMMARY_COLUMNS])


# --------------------------------------------------------------------------
# importance
# --------------------------------------------------------------------------

def run_importance(cfg: RunConfig, model_path: str | Path | None, out: str | Path | None = None,
                   k: int | None = None, data_path: str | Path | None = None):
    out = Path(out or cfg.output_dir)
    k = int(cfg.importance["k"] if k is None else k)
    with _stage("load"):
        ds = load_dataset(cfg, data_path)
        split = make_split(cfg, ds)
        full = None
        if model_path is not None:
            full = serialize.load_model(model_path)
            if not isinstance(full, AsenClassifier):
                raise ConfigError("importance needs an ASEN model file (models/asen.json)")
            check_split(full, split, "val", allow_train=True)
    with _stage("importance"):
        result = importance.feature_selection_experiment(
            ds, split, cfg.pool, cfg.asen, k, seed=derive_seed(cfg.seed, "importance"),
            repeats=int(cfg.importance["repeats"]), workers=cfg.workers, full_model=full)
    with _stage("write"):
        d = out / "importance"
        serialize.write_json(d / "importance.json", result.importance.to_dict())
        serialize.write_text(d / "importance.csv", result.importance.to_csv())
        serialize.write_json(d / "feature_selection.json", result.to_dict())
        serialize.write_json(d / "selected_asen.json", result.selected_model.to_dict())
    return result
