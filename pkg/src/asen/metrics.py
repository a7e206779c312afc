"""Confusion matrices, classification metrics and bootstrap intervals.

Matrices are oriented rows = true class, columns = predicted class.
Headline precision/recall/F1 are macro (unweighted) averages; micro values
are reported alongside.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, DimensionError, MetricUndefinedError
from .rng import check_seed, derive_seed

# column order of the summary line
SUMMARY_COLUMNS = ("F1-Score", "Precision", "Recall", "Accuracy", "AUC")


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        C = len(self.class_names)
        if counts.shape != (C, C):
            raise DimensionError(f"confusion matrix must be {C}x{C}, got {counts.shape}")
        if np.any(counts < 0):
            raise DataError("confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def permuted(self, order: Sequence[int]) -> "ConfusionMatrix":
        order = list(order)
        return ConfusionMatrix(self.counts[np.ix_(order, order)],
                               tuple(self.class_names[i] for i in order))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.class_names])
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name, *(int(v) for v in row)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"class_names": list(self.class_names), "counts": self.counts.tolist()}


def _encode(labels, class_names: Sequence[str]) -> np.ndarray:
    arr = np.asarray(labels)
    C = len(class_names)
    if arr.dtype.kind in "iu":
        if arr.size and (arr.min() < 0 or arr.max() >= C):
            raise DataError(f"label codes outside [0, {C})")
        return arr.astype(np.int64)
    code = {c: i for i, c in enumerate(class_names)}
    try:
        return np.array([code[l] for l in arr.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"unknown label {exc.args[0]!r}") from None


def confusion_matrix(y_true, y_pred, class_names: Sequence[str]) -> ConfusionMatrix:
    t = _encode(y_true, class_names)
    p = _encode(y_pred, class_names)
    if t.shape != p.shape:
        raise DimensionError("true and predicted labels differ in length")
    if t.size == 0:
        raise DataError("cannot build a confusion matrix from zero samples")
    C = len(class_names)
    counts = np.bincount(t * C + p, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(counts, tuple(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricUndefinedError("accuracy of an empty confusion matrix")
    return cm.correct / cm.total


def accuracy_fraction(cm: ConfusionMatrix) -> Fraction:
    if cm.total == 0:
        raise MetricUndefinedError("accuracy of an empty confusion matrix")
    return Fraction(cm.correct, cm.total)


@dataclass(frozen=True, eq=False)
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    precision_undefined: np.ndarray
    recall_undefined: np.ndarray
    f1_undefined: np.ndarray
    micro_precision: float
    micro_recall: float
    micro_f1: float

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())


def _safe_ratio(num: np.ndarray, den: np.ndarray):
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=~undefined)
    return out, undefined


def precision_recall_f1(cm: ConfusionMatrix) -> ClassScores:
    """Per-class scores; zero denominators give 0 and set the matching flag."""
    if cm.total == 0:
        raise MetricUndefinedError("empty confusion matrix")
    tp = np.diag(cm.counts).astype(np.float64)
    precision, p_undef = _safe_ratio(tp, cm.col_sums().astype(np.float64))
    recall, r_undef = _safe_ratio(tp, cm.row_sums().astype(np.float64))
    f1, f_undef = _safe_ratio(2 * precision * recall, precision + recall)
    micro = cm.correct / cm.total  # single-label multiclass: micro P = micro R = accuracy
    return ClassScores(precision, recall, f1, p_undef, r_undef, f_undef, micro, micro, micro)


@dataclass(frozen=True, eq=False)
class AucScores:
    per_class: np.ndarray  # NaN where excluded
    excluded: np.ndarray

    @property
    def macro(self) -> float:
        kept = self.per_class[~self.excluded]
        if kept.size == 0:
            raise MetricUndefinedError("no class has both positive and negative samples")
        return float(kept.mean())


def binary_auc(is_positive: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    is_positive = np.asarray(is_positive, dtype=bool)
    n_pos = int(is_positive.sum())
    n_neg = is_positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs at least one positive and one negative sample")
    ranks = rankdata(scores, method="average")
    return (float(ranks[is_positive].sum()) - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def roc_auc(y_true, scores: np.ndarray, class_names: Sequence[str] | None = None) -> AucScores:
    """One-vs-rest AUC per class from score column ``c``."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DimensionError("score rows must be a 2-D array")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    C = scores.shape[1]
    t = _encode(y_true, class_names if class_names is not None else [str(i) for i in range(C)])
    if t.shape[0] != scores.shape[0]:
        raise DimensionError("labels and score rows differ in length")
    per_class = np.full(C, np.nan)
    excluded = np.zeros(C, dtype=bool)
    for c in range(C):
        try:
            per_class[c] = binary_auc(t == c, scores[:, c])
        except MetricUndefinedError:
            excluded[c] = True
    return AucScores(per_class, excluded)


def bootstrap_ci(metric: Callable[[np.ndarray, np.ndarray], float], y_true, predictions,
                 resamples: int = 1000, level: float = 0.95, seed: int = 0,
                 max_retries: int = 10) -> tuple[float, float]:
    """Point estimate on the full data and percentile-interval half-width.

    Resample ``r`` draws from its own derived seed, so the result does not
    depend on evaluation order. A resample on which ``metric`` raises
    :class:`MetricUndefinedError` is redrawn up to ``max_retries`` times.
    """
    y_true = np.asarray(y_true)
    predictions = np.asarray(predictions)
    n = y_true.shape[0]
    if n < 2:
        raise DataError("bootstrap intervals need at least 2 samples")
    if not 0 < level < 1:
        raise ValueError("confidence level must lie in (0, 1)")
    check_seed(seed)
    point = float(metric(y_true, predictions))
    values = np.empty(resamples)
    for r in range(resamples):
        for attempt in range(max_retries + 1):
            rng = np.random.default_rng(derive_seed(seed, "ci", r, attempt))
            idx = rng.integers(0, n, size=n)
            try:
                values[r] = metric(y_true[idx], predictions[idx])
                break
            except MetricUndefinedError:
                continue
        else:
            raise MetricUndefinedError(f"metric undefined on resample {r} after {max_retries} retries")
    alpha = (1 - level) / 2
    lo, hi = np.percentile(values, [100 * alpha, 100 * (1 - alpha)])
    return point, float(hi - lo) / 2


# metric callables for bootstrap_ci ------------------------------------------

def accuracy_metric(y_true, y_pred) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def class_precision_metric(c: int):
    def metric(y_true, y_pred):
        predicted = y_pred == c
        if not predicted.any():
            raise MetricUndefinedError(f"class {c} never predicted")
        return float(np.mean(y_true[predicted] == c))
    return metric


def class_recall_metric(c: int):
    def metric(y_true, y_pred):
        actual = y_true == c
        if not actual.any():
            raise MetricUndefinedError(f"class {c} absent")
        return float(np.mean(y_pred[actual] == c))
    return metric


def class_f1_metric(c: int):
    p, r = class_precision_metric(c), class_recall_metric(c)

    def metric(y_true, y_pred):
        pv, rv = p(y_true, y_pred), r(y_true, y_pred)
        return 0.0 if pv + rv == 0 else 2 * pv * rv / (pv + rv)
    return metric


def macro_metric(kind: str, n_classes: int):
    def metric(y_true, y_pred):
        cm = confusion_matrix(y_true, y_pred, [str(i) for i in range(n_classes)])
        s = precision_recall_f1(cm)
        return {"precision": s.macro_precision, "recall": s.macro_recall, "f1": s.macro_f1}[kind]
    return metric


def macro_auc_metric(y_true, scores) -> float:
    return roc_auc(y_true, scores).macro


# report ---------------------------------------------------------------------

@dataclass(eq=False)
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    auc: np.ndarray | None = None
    macro_auc: float | None = None
    flags: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.confusion.class_names

    def summary(self) -> dict[str, float | None]:
        return dict(zip(SUMMARY_COLUMNS, (self.macro_f1, self.macro_precision, self.macro_recall,
                                          self.accuracy, self.macro_auc)))

    def summary_line(self, name: str = "model") -> str:
        cells = ["n/a" if v is None else f"{100 * v:.2f}%" for v in self.summary().values()]
        return "\t".join([name, *cells])

    def to_dict(self) -> dict:
        names = self.class_names

        def per_class(arr):
            return None if arr is None else {
                n: (None if np.isnan(v) else float(v)) for n, v in zip(names, arr)}

        return {
            "summary": self.summary(),
            "accuracy": self.accuracy,
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1, "auc": self.macro_auc},
            "micro": {"precision": self.micro_precision, "recall": self.micro_recall,
                      "f1": self.micro_f1},
            "per_class": {"precision": per_class(self.precision), "recall": per_class(self.recall),
                          "f1": per_class(self.f1), "auc": per_class(self.auc)},
            "flags": self.flags,
            "confidence_half_widths": self.ci,
            "confusion_matrix": self.confusion.to_dict(),
        }


def report_from_confusion(cm: ConfusionMatrix, auc: AucScores | None = None) -> MetricsReport:
    s = precision_recall_f1(cm)
    names = cm.class_names

    def flagged(mask):
        return [n for n, f in zip(names, mask) if f]

    flags = {"precision_undefined": flagged(s.precision_undefined),
             "recall_undefined": flagged(s.recall_undefined),
             "f1_undefined": flagged(s.f1_undefined)}
    macro_auc = None
    if auc is not None:
        flags["auc_excluded"] = flagged(auc.excluded)
        macro_auc = auc.macro if not auc.excluded.all() else None
    return MetricsReport(
        confusion=cm, accuracy=accuracy(cm),
        precision=s.precision, recall=s.recall, f1=s.f1,
        macro_precision=s.macro_precision, macro_recall=s.macro_recall, macro_f1=s.macro_f1,
        micro_precision=s.micro_precision, micro_recall=s.micro_recall, micro_f1=s.micro_f1,
        auc=None if auc is None else auc.per_class, macro_auc=macro_auc, flags=flags,
    )


def evaluate(y_true, y_pred, scores: np.ndarray | None, class_names: Sequence[str],
             ci_resamples: int = 0, level: float = 0.95, seed: int = 0) -> MetricsReport:
    """Full report; with ``ci_resamples > 0`` adds bootstrap half-widths.

    Half-widths cover accuracy, the macro scores, macro AUC and class-wise
    precision/recall/F1.
    """
    cm = confusion_matrix(y_true, y_pred, class_names)
    auc = roc_auc(y_true, scores, class_names) if scores is not None else None
    report = report_from_confusion(cm, auc)
    if ci_resamples > 0:
        t = _encode(y_true, class_names)
        p = _encode(y_pred, class_names)
        C = len(class_names)
        ci = {}

        def hw(metric, preds, tag):
            return bootstrap_ci(metric, t, preds, ci_resamples, level, derive_seed(seed, tag))[1]

        ci["accuracy"] = hw(accuracy_metric, p, "accuracy")
        for kind in ("precision", "recall", "f1"):
            ci[f"macro_{kind}"] = hw(macro_metric(kind, C), p, f"macro-{kind}")
        if scores is not None and report.macro_auc is not None:
            ci["macro_auc"] = hw(macro_auc_metric, np.asarray(scores), "macro-auc")
        per_class = {}
        for c, name in enumerate(class_names):
            entry = {}
            for kind, factory in (("precision", class_precision_metric),
                                  ("recall", class_recall_metric), ("f1", class_f1_metric)):
                try:
                    entry[kind] = hw(factory(c), p, f"{kind}-{c}")
                except MetricUndefinedError:
                    entry[kind] = None
            per_class[name] = entry
        ci["per_class"] = per_class
        ci["level"] = level
        ci["resamples"] = ci_resamples
        report.ci = ci
    return report
