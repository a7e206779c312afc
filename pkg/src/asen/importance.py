"""Permutation feature importance and the top-k retraining experiment."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import metrics as M
from .data import Dataset, DatasetSplit
from .ensemble import AsenClassifier, PoolConfig, fit_asen_classifier
from .errors import ConfigError, DataError
from .mlp import TrainConfig
from .rng import check_seed, make_rng

# column order of the with/without feature selection comparison
COMPARISON_COLUMNS = ("Accuracy", "F1-Score", "Precision", "Recall", "AUC")


def accuracy_score(y_true, labels, scores) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(labels)))


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    baseline: float
    metric: str = "accuracy"
    repeats: int = 10

    @property
    def ranking(self) -> list[int]:
        """Feature positions by descending mean importance, stable on ties."""
        return sorted(range(len(self.feature_names)), key=lambda j: (-self.mean[j], j))

    def ranked_names(self) -> list[str]:
        return [self.feature_names[j] for j in self.ranking]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric, "repeats": self.repeats, "baseline": self.baseline,
            "features": [
                {"feature": self.feature_names[j], "mean_importance": float(self.mean[j]),
                 "std": float(self.std[j]), "rank": r + 1}
                for r, j in enumerate(self.ranking)
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "mean_importance"])
        for j in self.ranking:
            w.writerow([self.feature_names[j], repr(float(self.mean[j]))])
        return buf.getvalue()


def permutation_importance(
    model,
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str] | None = None,
    metric: Callable = accuracy_score,
    repeats: int = 10,
    seed: int = 0,
    metric_name: str = "accuracy",
) -> ImportanceReport:
    """Metric drop when each column of ``X`` is shuffled, averaged over repeats.

    ``model.predict(X)`` must return ``(labels, scores, ...)``. Column ``j``
    on repeat ``r`` is shuffled with a permutation seeded from
    ``(seed, j, r)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] < 2:
        raise DataError("permutation importance needs at least 2 evaluation samples")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    check_seed(seed)
    d = X.shape[1]
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(d))

    def score(Xs):
        out = model.predict(Xs)
        return metric(y, out[0], out[1])

    baseline = score(X)
    drops = np.empty((d, repeats))
    for j in range(d):
        for r in range(repeats):
            perm = make_rng(seed, "permute", j, r).permutation(X.shape[0])
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            drops[j, r] = baseline - score(Xp)
    return ImportanceReport(names, drops.mean(axis=1), drops.std(axis=1), float(baseline),
                            metric_name, repeats)


def select_top_k(report: ImportanceReport, k: int) -> tuple[str, ...]:
    """Names of the ``k`` best-ranked features, in their original order."""
    d = len(report.feature_names)
    if not 1 <= k <= d:
        raise ConfigError(f"k must lie in [1, {d}], got {k}")
    keep = set(report.ranking[:k])
    return tuple(n for j, n in enumerate(report.feature_names) if j in keep)


def evaluate_classifier(clf, ds: Dataset, ci_resamples: int = 0, seed: int = 0,
                        level: float = 0.95) -> M.MetricsReport:
    labels, scores = clf.predict(ds.X)[:2]
    return M.evaluate(ds.y, labels, scores, ds.class_names, ci_resamples=ci_resamples,
                      level=level, seed=seed)


def comparison_row(report: M.MetricsReport) -> dict[str, float | None]:
    s = report.summary()
    return {"Accuracy": s["Accuracy"], "F1-Score": s["F1-Score"], "Precision": s["Precision"],
            "Recall": s["Recall"], "AUC": s["AUC"]}


@dataclass(eq=False)
class FeatureSelectionResult:
    importance: ImportanceReport
    selected_features: tuple[str, ...]
    full: M.MetricsReport
    selected: M.MetricsReport
    full_model: AsenClassifier
    selected_model: AsenClassifier

    def deltas(self) -> dict[str, float | None]:
        a, b = comparison_row(self.full), comparison_row(self.selected)
        return {k: None if a[k] is None or b[k] is None else b[k] - a[k] for k in COMPARISON_COLUMNS}

    def table(self) -> dict:
        return {"columns": list(COMPARISON_COLUMNS),
                "rows": {"full_feature_set": comparison_row(self.full),
                         "after_feature_selection": comparison_row(self.selected),
                         "delta": self.deltas()}}

    def to_dict(self) -> dict:
        return {"selected_features": list(self.selected_features),
                "all_features": list(self.importance.feature_names),
                "comparison": self.table(),
                "importance": self.importance.to_dict(),
                "full": self.full.to_dict(), "selected": self.selected.to_dict()}


def feature_selection_experiment(
    dataset: Dataset,
    split: DatasetSplit,
    pool_cfg: PoolConfig,
    asen_cfg: TrainConfig,
    k: int,
    seed: int = 0,
    repeats: int = 10,
    workers: int = 1,
    full_model: AsenClassifier | None = None,
) -> FeatureSelectionResult:
    """Train on all features, rank them on validation data, retrain on the top k.

    Both arms share ``split`` and ``pool_cfg`` (hence every derived seed), so
    differences between them come from the feature subset alone. Both are
    scored on the test split.
    """
    train, val, test = (dataset.subset(split.role(r)) for r in ("train", "val", "test"))
    digest = split.digest()
    if full_model is None:
        full_model = fit_asen_classifier(train, val, pool_cfg, asen_cfg, workers, digest)
    elif tuple(full_model.feature_names) != dataset.feature_names:
        raise ConfigError("full model was trained on different features than the dataset")
    imp = permutation_importance(full_model, val.X, val.y, dataset.feature_names,
                                 repeats=repeats, seed=seed)
    chosen = select_top_k(imp, k)
    sel_model = fit_asen_classifier(train.select_features(chosen), val.select_features(chosen),
                                    pool_cfg, asen_cfg, workers, digest)
    full_report = evaluate_classifier(full_model, test)
    sel_report = evaluate_classifier(sel_model, test.select_features(chosen))
    return FeatureSelectionResult(imp, chosen, full_report, sel_report, full_model, sel_model)
