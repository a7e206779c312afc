"""Linear comparison models: softmax regression and a one-vs-rest linear SVM.

Both are trained by mini-batch (sub)gradient descent with an L2 penalty on
the weights (not the biases), through the same early-stopping loop as the
MLPs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DataError, DimensionError
from .mlp import FORMAT_VERSION, TrainConfig, TrainReport, fit, one_hot, softmax, softmax_cross_entropy

KINDS = ("logistic", "svm")


@dataclass(eq=False)
class LinearModel:
    kind: str
    W: np.ndarray  # (C, d)
    b: np.ndarray  # (C,)
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown linear model kind {self.kind!r}")
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError("linear model needs W of shape (C, d) and b of shape (C,)")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise DimensionError("linear model parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W.shape[1]

    def to_dict(self) -> dict:
        return {"model_kind": self.kind, "rows": self.W.shape[0], "cols": self.W.shape[1],
                "weights": self.W.ravel().tolist(), "bias": self.b.tolist(),
                "hyper": dict(self.hyper)}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        W = np.array(d["weights"], dtype=np.float64).reshape(d["rows"], d["cols"])
        return cls(d["model_kind"], W, np.array(d["bias"], dtype=np.float64), dict(d["hyper"]))


def _check_labels(y: np.ndarray, n_classes: int | None) -> int:
    present = np.unique(y)
    if present.size < 2:
        raise DataError(f"training set has {present.size} class(es); a classifier needs >= 2")
    return int(n_classes if n_classes is not None else present.max() + 1)


def _l2(W: np.ndarray, strength: float) -> float:
    return 0.5 * strength * float(np.sum(W * W))


def logreg_loss_and_gradients(params, X, Y, l2: float):
    W, b = params
    logits = X @ W.T + b
    loss, dz = softmax_cross_entropy(logits, Y)
    return loss + _l2(W, l2), [dz.T @ X + l2 * W, dz.sum(axis=0)], logits


def hinge_loss_and_gradients(params, X, Y, l2: float):
    """One-vs-rest hinge: every class score is pushed past +-1."""
    W, b = params
    S = X @ W.T + b
    T = 2.0 * Y - 1.0
    margins = 1.0 - T * S
    active = margins > 0
    m = X.shape[0]
    loss = float(np.sum(margins[active])) / m + _l2(W, l2)
    dS = -(T * active) / m
    return loss, [dS.T @ X + l2 * W, dS.sum(axis=0)], S


_LOSSES = {"logistic": logreg_loss_and_gradients, "svm": hinge_loss_and_gradients}


def _train_linear(kind, X, y, X_val, y_val, lr, l2, max_epochs, seed, batch_size, patience,
                  n_classes):
    X = np.asarray(X, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    C = _check_labels(np.asarray(y), n_classes)
    if l2 < 0:
        raise ConfigError("L2 strength must be non-negative")
    cfg = TrainConfig(lr=lr, max_epochs=max_epochs, seed=seed, batch_size=batch_size,
                      patience=patience, optimizer="sgd")
    loss_fn = _LOSSES[kind]

    def loss_grad(params, Xb, Yb, rng):
        loss, grads, S = loss_fn(params, Xb, Yb, l2)
        return loss, grads, int(np.sum(S.argmax(axis=1) == Yb.argmax(axis=1)))

    def evaluate(params, Xv, Yv):
        loss, _, S = loss_fn(params, Xv, Yv, l2)
        return loss, float(np.mean(S.argmax(axis=1) == Yv.argmax(axis=1)))

    params = [np.zeros((C, X.shape[1])), np.zeros(C)]
    params, report = fit(params, loss_grad, evaluate, X, one_hot(y, C), X_val, one_hot(y_val, C), cfg)
    hyper = {"lr": lr, "l2": l2, "max_epochs": max_epochs, "seed": seed,
             "batch_size": batch_size, "patience": patience}
    return LinearModel(kind, params[0], params[1], hyper), report


def train_logreg(X, y, X_val, y_val, lr: float = 0.01, l2: float = 1e-4, max_epochs: int = 100,
                 seed: int = 0, batch_size: int = 32, patience: int = 3,
                 n_classes: int | None = None) -> tuple[LinearModel, TrainReport]:
    return _train_linear("logistic", X, y, X_val, y_val, lr, l2, max_epochs, seed, batch_size,
                         patience, n_classes)


def train_linear_svm(X, y, X_val, y_val, lr: float = 0.01, l2: float = 1e-4, max_epochs: int = 100,
                     seed: int = 0, batch_size: int = 32, patience: int = 3,
                     n_classes: int | None = None) -> tuple[LinearModel, TrainReport]:
    return _train_linear("svm", X, y, X_val, y_val, lr, l2, max_epochs, seed, batch_size,
                         patience, n_classes)


def predict_linear(model: LinearModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels and score rows: probabilities for logistic, raw margins for SVM."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_inputs:
        raise DimensionError(f"expected {model.n_inputs} features, got {X.shape[1]}")
    S = X @ model.W.T + model.b
    if model.kind == "logistic":
        S = softmax(S)
    return np.argmax(S, axis=1), S


@dataclass(eq=False)
class LinearClassifier:
    """A baseline bundled with the normalizer it was trained behind."""

    model: LinearModel
    normalizer: data_mod.NormalizationParams
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    split_digest: str | None = None
    report: TrainReport | None = None

    def predict(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return predict_linear(self.model, data_mod.apply_normalizer(self.normalizer, X))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)[1]

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": "linear",
                "feature_selection": list(self.feature_names),
                "class_names": list(self.class_names),
                "normalizer": self.normalizer.to_dict(),
                "split_digest": self.split_digest,
                **self.model.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "LinearClassifier":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "linear":
            raise ConfigError("not a version-1 linear model document")
        return cls(LinearModel.from_dict(d), data_mod.NormalizationParams.from_dict(d["normalizer"]),
                   tuple(d["feature_selection"]), tuple(d["class_names"]), d.get("split_digest"))
