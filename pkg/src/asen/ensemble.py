"""Bootstrap pool of MLP base learners and the attention stacking network.

The meta-learner scores each base learner per sample. Every learner's
probability row ``p_i`` goes through one shared 64-wide ReLU layer, the
hidden vector is dotted with a trainable attention vector to give a score,
the scores are softmaxed across learners, and the learners' rows are mixed
with those weights. A final softmax turns the mixed row into the output
distribution. Base learners stay frozen while the meta-learner trains.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DimensionError, TrainingDivergedError
from .mlp import (
    FORMAT_VERSION, MlpConfig, MlpModel, TrainConfig, TrainReport, evaluate_mlp,
    fit, forward, init_mlp, one_hot, softmax, softmax_cross_entropy, train_mlp,
)
from .rng import check_seed, derive_seed, make_rng

log = logging.getLogger(__name__)

ATTENTION_WIDTH = 64


# --------------------------------------------------------------------------
# base-learner pool
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArchitectureRanges:
    layers: tuple[int, int] = (1, 3)
    width: tuple[int, int] = (10, 100)
    dropout: tuple[float, float] = (0.2, 0.6)

    def __post_init__(self):
        for name in ("layers", "width", "dropout"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range is empty: {lo} > {hi}")
            object.__setattr__(self, name, (lo, hi))
        if self.layers[0] < 1 or self.layers[1] > 3:
            raise ConfigError("layer count range must lie within [1, 3]")
        if self.width[0] < 10 or self.width[1] > 100:
            raise ConfigError("width range must lie within [10, 100]")
        if self.dropout[0] < 0.2 or self.dropout[1] > 0.6:
            raise ConfigError("dropout range must lie within [0.2, 0.6]")


def sample_architecture(ranges: ArchitectureRanges, seed: int, n_inputs: int = 11,
                        n_classes: int = 6) -> MlpConfig:
    rng = make_rng(check_seed(seed), "architecture")
    n_layers = int(rng.integers(ranges.layers[0], ranges.layers[1] + 1))
    widths = tuple(int(w) for w in rng.integers(ranges.width[0], ranges.width[1] + 1, size=n_layers))
    dropout = float(rng.uniform(*ranges.dropout))
    return MlpConfig(n_inputs=n_inputs, hidden=widths, dropout=dropout, n_classes=n_classes,
                     seed=derive_seed(seed, "init"))


@dataclass(frozen=True)
class PoolConfig:
    n_learners: int = 10
    ranges: ArchitectureRanges = ArchitectureRanges()
    train: TrainConfig = TrainConfig()
    seed: int = 0

    def __post_init__(self):
        if self.n_learners < 2:
            raise ConfigError("a pool needs at least 2 base learners")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        return {"n_learners": self.n_learners,
                "ranges": {k: list(v) for k, v in asdict(self.ranges).items()},
                "train": self.train.to_dict(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "PoolConfig":
        return cls(n_learners=d["n_learners"],
                   ranges=ArchitectureRanges(**{k: tuple(v) for k, v in d["ranges"].items()}),
                   train=TrainConfig.from_dict(d["train"]), seed=d["seed"])


@dataclass(eq=False)
class BaseLearner:
    model: MlpModel
    seed: int
    bootstrap_seed: int
    val_accuracy: float
    report: TrainReport | None = None

    @property
    def config(self) -> MlpConfig:
        return self.model.config

    def to_dict(self) -> dict:
        d = self.model.to_dict()
        d["learner"] = {"seed": self.seed, "bootstrap_seed": self.bootstrap_seed,
                        "val_accuracy": self.val_accuracy}
        return d

    @classmethod
    def from_dict(cls, d) -> "BaseLearner":
        meta = d["learner"]
        return cls(MlpModel.from_dict(d), meta["seed"], meta["bootstrap_seed"], meta["val_accuracy"])


@dataclass(eq=False)
class BaseLearnerPool:
    learners: list[BaseLearner]

    def __post_init__(self):
        if not self.learners:
            raise ConfigError("empty pool")
        dims = {(l.config.n_inputs, l.config.n_classes) for l in self.learners}
        if len(dims) != 1:
            raise DimensionError(f"base learners disagree on (inputs, classes): {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.learners)

    @property
    def n_inputs(self) -> int:
        return self.learners[0].config.n_inputs

    @property
    def n_classes(self) -> int:
        return self.learners[0].config.n_classes

    @property
    def models(self) -> list[MlpModel]:
        return [l.model for l in self.learners]

    def to_list(self) -> list[dict]:
        return [l.to_dict() for l in self.learners]

    @classmethod
    def from_list(cls, items) -> "BaseLearnerPool":
        return cls([BaseLearner.from_dict(d) for d in items])


def _train_learner(i: int, X, y, X_val, y_val, cfg: PoolConfig, n_classes: int) -> BaseLearner:
    for attempt in range(2):
        seed = derive_seed(cfg.seed, "learner", i, attempt)
        boot_seed = derive_seed(seed, "bootstrap")
        idx = data_mod.bootstrap_sample(np.arange(len(X)), boot_seed)
        arch = sample_architecture(cfg.ranges, derive_seed(seed, "arch"),
                                   n_inputs=X.shape[1], n_classes=n_classes)
        try:
            model, report = train_mlp(init_mlp(arch), X[idx], y[idx], X_val, y_val,
                                      cfg.train.with_seed(derive_seed(seed, "train")))
        except TrainingDivergedError as exc:
            if attempt == 0:
                log.warning("base learner %d diverged (%s); retrying with a new seed", i, exc)
                continue
            raise TrainingDivergedError(f"base learner {i} diverged twice: {exc}", exc.epoch) from None
        return BaseLearner(model, seed, boot_seed, report.best_val_accuracy, report)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class _PoolJob:
    X: np.ndarray
    y: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    cfg: PoolConfig
    n_classes: int

    def __call__(self, i: int) -> BaseLearner:
        return _train_learner(i, self.X, self.y, self.X_val, self.y_val, self.cfg, self.n_classes)


def train_pool(X: np.ndarray, y: np.ndarray, X_val: np.ndarray, y_val: np.ndarray,
               cfg: PoolConfig = PoolConfig(), n_classes: int | None = None,
               workers: int = 1) -> BaseLearnerPool:
    """Train ``cfg.n_learners`` MLPs, each on its own bootstrap resample.

    Learner ``i`` derives every seed it uses from ``(cfg.seed, i)`` only, so
    results do not depend on ``workers`` or on scheduling order.
    """
    X = np.asarray(X, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if n_classes is None:
        n_classes = int(max(y.max(), y_val.max())) + 1
    job = _PoolJob(X, y, X_val, y_val, cfg, n_classes)
    if workers <= 1:
        learners = [job(i) for i in range(cfg.n_learners)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            learners = list(ex.map(job, range(cfg.n_learners)))
    for i, l in enumerate(learners):
        log.info("base learner %d: hidden=%s dropout=%.3f val_acc=%.4f", i,
                 l.config.hidden, l.config.dropout, l.val_accuracy)
    return BaseLearnerPool(learners)


def stack_predictions(pool: BaseLearnerPool | Sequence[MlpModel], X: np.ndarray) -> np.ndarray:
    """Inference-mode probability rows of every learner, shape ``(m, B, C)``."""
    models = pool.models if isinstance(pool, BaseLearnerPool) else list(pool)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != models[0].config.n_inputs:
        raise DimensionError(f"expected batch of shape (m, {models[0].config.n_inputs}), got {X.shape}")
    return np.stack([forward(m, X) for m in models], axis=1)


# --------------------------------------------------------------------------
# attention meta-learner
# --------------------------------------------------------------------------

@dataclass(eq=False)
class AsenModel:
    """Parameters of the attention stacking layer.

    ``W`` is ``(hidden, C)`` and maps one learner's probability row to the
    hidden layer; ``attention`` is the ``(hidden,)`` scoring vector.
    """

    W: np.ndarray
    bias: np.ndarray
    attention: np.ndarray
    n_learners: int

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.attention = np.asarray(self.attention, dtype=np.float64)
        H = self.W.shape[0]
        if self.W.ndim != 2 or self.bias.shape != (H,) or self.attention.shape != (H,):
            raise DimensionError("attention parameters have inconsistent shapes")
        if not all(np.all(np.isfinite(p)) for p in self.params):
            raise DimensionError("attention parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    @property
    def hidden(self) -> int:
        return self.W.shape[0]

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W, self.bias, self.attention]

    def copy(self) -> "AsenModel":
        return AsenModel(self.W.copy(), self.bias.copy(), self.attention.copy(), self.n_learners)

    def to_dict(self) -> dict:
        return {"hidden": self.hidden, "n_classes": self.n_classes, "n_learners": self.n_learners,
                "W": self.W.ravel().tolist(), "bias": self.bias.tolist(),
                "a_v": self.attention.tolist()}

    @classmethod
    def from_dict(cls, d) -> "AsenModel":
        W = np.array(d["W"], dtype=np.float64).reshape(d["hidden"], d["n_classes"])
        return cls(W, np.array(d["bias"], dtype=np.float64), np.array(d["a_v"], dtype=np.float64),
                   d["n_learners"])


def init_asen(n_learners: int, n_classes: int, seed: int = 0,
              hidden: int = ATTENTION_WIDTH) -> AsenModel:
    rng = make_rng(check_seed(seed), "asen-init")
    W = rng.normal(0.0, np.sqrt(2.0 / n_classes), size=(hidden, n_classes))
    a_v = rng.normal(0.0, np.sqrt(1.0 / hidden), size=hidden)
    return AsenModel(W, np.zeros(hidden), a_v, n_learners)


def _attention_forward(params, P):
    W, bias, a_v = params
    pre = P @ W.T + bias                      # (m, B, H)
    H = np.maximum(pre, 0.0)
    scores = H @ a_v                          # (m, B)
    weights = softmax(scores, axis=1)
    q = np.einsum("mb,mbc->mc", weights, P)   # convex mix of learner rows
    return q, (pre, H, weights)


def _attention_backward(params, P, cache, dq):
    W, bias, a_v = params
    pre, H, weights = cache
    dw = np.einsum("mc,mbc->mb", dq, P)
    ds = weights * (dw - np.sum(weights * dw, axis=1, keepdims=True))
    da_v = np.einsum("mbh,mb->h", H, ds)
    dpre = ds[:, :, None] * a_v * (pre > 0)
    dW = np.einsum("mbh,mbc->hc", dpre, P)
    dbias = dpre.sum(axis=(0, 1))
    return [dW, dbias, da_v]


def _check_stacked(asen: AsenModel, P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 3 or P.shape[1:] != (asen.n_learners, asen.n_classes):
        raise DimensionError(
            f"stacked input must be (m, {asen.n_learners}, {asen.n_classes}), got {P.shape}")
    return P


def asen_forward(asen: AsenModel, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return output probability rows ``(m, C)`` and attention weights ``(m, B)``."""
    P = _check_stacked(asen, P)
    q, (_, _, weights) = _attention_forward(asen.params, P)
    out = softmax(q)
    if not (np.all(np.isfinite(out)) and np.all(np.isfinite(weights))):
        raise FloatingPointError("non-finite value in attention forward pass")
    return out, weights


def combined_rows(asen: AsenModel, P: np.ndarray) -> np.ndarray:
    """The attention-weighted mixture before the final softmax."""
    return _attention_forward(asen.params, _check_stacked(asen, P))[0]


def asen_loss_and_gradients(asen: AsenModel, P: np.ndarray, Y: np.ndarray):
    P = _check_stacked(asen, P)
    q, cache = _attention_forward(asen.params, P)
    loss, dq = softmax_cross_entropy(q, np.asarray(Y, dtype=np.float64))
    return loss, _attention_backward(asen.params, P, cache, dq)


def _asen_fns():
    def loss_grad(params, Pb, Yb, rng):
        q, cache = _attention_forward(params, Pb)
        loss, dq = softmax_cross_entropy(q, Yb)
        correct = int(np.sum(q.argmax(axis=1) == Yb.argmax(axis=1)))
        return loss, _attention_backward(params, Pb, cache, dq), correct

    def evaluate(params, Pv, Yv):
        q, _ = _attention_forward(params, Pv)
        loss, _ = softmax_cross_entropy(q, Yv)
        return loss, float(np.mean(q.argmax(axis=1) == Yv.argmax(axis=1)))

    return loss_grad, evaluate


def train_asen(asen: AsenModel, pool: BaseLearnerPool, X: np.ndarray, y: np.ndarray,
               X_val: np.ndarray, y_val: np.ndarray,
               cfg: TrainConfig = TrainConfig()) -> tuple[AsenModel, TrainReport]:
    """Fit the attention layer on frozen base-learner outputs."""
    if len(pool) != asen.n_learners or pool.n_classes != asen.n_classes:
        raise DimensionError("attention model does not match the pool")
    P = stack_predictions(pool, X)
    P_val = stack_predictions(pool, X_val)
    params = [p.copy() for p in asen.params]
    loss_grad, evaluate = _asen_fns()
    C = asen.n_classes
    params, report = fit(params, loss_grad, evaluate, P, one_hot(y, C), P_val, one_hot(y_val, C), cfg)
    return AsenModel(*params, n_learners=asen.n_learners), report


# --------------------------------------------------------------------------
# the trained classifier
# --------------------------------------------------------------------------

@dataclass(eq=False)
class AsenClassifier:
    """Normalizer, frozen pool and attention layer, applied to raw features."""

    normalizer: data_mod.NormalizationParams
    pool: BaseLearnerPool
    asen: AsenModel
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    split_digest: str | None = None
    reports: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray):
        return predict(self, X)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return predict(self, X)[1]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "asen",
            "feature_selection": list(self.feature_names),
            "class_names": list(self.class_names),
            "normalizer": self.normalizer.to_dict(),
            "split_digest": self.split_digest,
            "asen": self.asen.to_dict(),
            "pool": self.pool.to_list(),
        }

    @classmethod
    def from_dict(cls, d) -> "AsenClassifier":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "asen":
            raise ConfigError("not a version-1 ASEN model document")
        return cls(
            normalizer=data_mod.NormalizationParams.from_dict(d["normalizer"]),
            pool=BaseLearnerPool.from_list(d["pool"]),
            asen=AsenModel.from_dict(d["asen"]),
            feature_names=tuple(d["feature_selection"]),
            class_names=tuple(d["class_names"]),
            split_digest=d.get("split_digest"),
        )


def predict(clf: AsenClassifier, X: np.ndarray):
    """Labels (lowest index wins ties), probability rows and attention weights."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(clf.feature_names):
        raise DimensionError(f"expected {len(clf.feature_names)} features, got {X.shape[1]}")
    Z = data_mod.apply_normalizer(clf.normalizer, X)
    probs, weights = asen_forward(clf.asen, stack_predictions(clf.pool, Z))
    return np.argmax(probs, axis=1), probs, weights


def fit_asen_classifier(train: data_mod.Dataset, val: data_mod.Dataset, pool_cfg: PoolConfig,
                        asen_cfg: TrainConfig, workers: int = 1,
                        split_digest: str | None = None) -> AsenClassifier:
    """Normalize on ``train``, train the pool, then the attention layer."""
    norm = data_mod.fit_normalizer(train.X)
    Xtr = data_mod.apply_normalizer(norm, train.X)
    Xva = data_mod.apply_normalizer(norm, val.X)
    C = train.n_classes
    pool = train_pool(Xtr, train.y, Xva, val.y, pool_cfg, n_classes=C, workers=workers)
    asen0 = init_asen(len(pool), C, derive_seed(pool_cfg.seed, "asen"))
    asen, report = train_asen(asen0, pool, Xtr, train.y, Xva, val.y,
                              asen_cfg.with_seed(derive_seed(pool_cfg.seed, "asen-train")))
    reports = {"asen": report.to_dict(),
               "pool": [l.report.to_dict() if l.report else None for l in pool.learners]}
    return AsenClassifier(norm, pool, asen, train.feature_names, train.class_names,
                          split_digest, reports)


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

@dataclass(eq=False)
class GridResult:
    config: MlpConfig
    val_accuracy: float
    val_loss: float
    param_count: int
    report: TrainReport


def grid_search(X: np.ndarray, y: np.ndarray, X_val: np.ndarray, y_val: np.ndarray,
                layer_counts: Sequence[int] = (1, 2, 3),
                widths: Sequence[int] = (10, 50, 100),
                dropouts: Sequence[float] = (0.2, 0.4, 0.6),
                train_cfg: TrainConfig = TrainConfig(), seed: int = 0,
                n_classes: int | None = None) -> list[GridResult]:
    """Train every (layers, width, dropout) combination and rank them.

    Ranking: higher validation accuracy, then lower validation loss, then
    fewer parameters. Every combination uses the same derived seed.
    """
    if not (layer_counts and widths and dropouts):
        raise ConfigError("grid axes must be non-empty")
    if n_classes is None:
        n_classes = int(max(np.max(y), np.max(y_val))) + 1
    s = derive_seed(seed, "grid")
    results = []
    for L, w, p in itertools.product(layer_counts, widths, dropouts):
        cfg = MlpConfig(n_inputs=X.shape[1], hidden=(w,) * L, dropout=p, n_classes=n_classes,
                        seed=derive_seed(s, "init"))
        model, report = train_mlp(init_mlp(cfg), X, y, X_val, y_val,
                                  train_cfg.with_seed(derive_seed(s, "train")))
        loss, acc = evaluate_mlp(model, X_val, y_val)
        results.append(GridResult(cfg, acc, loss, model.param_count(), report))
    results.sort(key=lambda r: (-r.val_accuracy, r.val_loss, r.param_count))
    return results
