"""A small NumPy multilayer perceptron with hand-written backpropagation.

Hidden layers use ReLU followed by inverted dropout; the output layer is a
softmax fused with categorical cross-entropy. Weight matrices are stored as
``(fan_in, fan_out)`` so a forward step is ``h @ W + b``.

The training loop in :func:`fit` is shared by the base learners, the
attention meta-learner and the linear baselines.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, TrainingDivergedError
from .rng import check_seed, make_rng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

MIN_LAYERS, MAX_LAYERS = 1, 3
MIN_WIDTH, MAX_WIDTH = 10, 100


@dataclass(frozen=True)
class MlpConfig:
    n_inputs: int = 11
    hidden: tuple[int, ...] = (64,)
    dropout: float = 0.2
    n_classes: int = 6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not MIN_LAYERS <= len(self.hidden) <= MAX_LAYERS:
            raise ConfigError(
                f"hidden layer count must be in [{MIN_LAYERS}, {MAX_LAYERS}], got {len(self.hidden)}")
        for h in self.hidden:
            if not MIN_WIDTH <= h <= MAX_WIDTH:
                raise ConfigError(f"hidden width must be in [{MIN_WIDTH}, {MAX_WIDTH}], got {h}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.n_inputs < 1 or self.n_classes < 2:
            raise ConfigError("need at least one input and two classes")
        check_seed(self.seed)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.n_inputs, *self.hidden, self.n_classes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d) -> "MlpConfig":
        return cls(**{**d, "hidden": tuple(d["hidden"])})


@dataclass(eq=False)
class MlpModel:
    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        sizes = self.config.sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionError("layer count does not match config")
        for W, b, fan_in, fan_out in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise DimensionError(f"layer shape {W.shape}/{b.shape} breaks the chain {sizes}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise DimensionError("model parameters must be finite")

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W1, b1, W2, b2, ...]`` (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_params(cls, config: MlpConfig, params: Sequence[np.ndarray]) -> "MlpModel":
        return cls(config, [np.asarray(p) for p in params[0::2]],
                   [np.asarray(p) for p in params[1::2]])

    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpModel":
        return MlpModel(self.config, [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases])

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "mlp",
            "config": self.config.to_dict(),
            "layers": [
                {"rows": W.shape[0], "cols": W.shape[1],
                 "weights": W.ravel(order="C").tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "MlpModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format version {d.get('format_version')!r}")
        config = MlpConfig.from_dict(d["config"])
        weights = [np.array(l["weights"], dtype=np.float64).reshape(l["rows"], l["cols"])
                   for l in d["layers"]]
        biases = [np.array(l["bias"], dtype=np.float64) for l in d["layers"]]
        return cls(config, weights, biases)


def init_mlp(config: MlpConfig) -> MlpModel:
    """He-normal hidden layers, LeCun-normal output layer, zero biases."""
    rng = make_rng(config.seed, "init")
    sizes = config.sizes
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = 1.0 if i == len(sizes) - 2 else 2.0
        weights.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(config, weights, biases)


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of ``softmax(logits)`` against one-hot ``Y``.

    Returns the loss and its gradient with respect to ``logits``.
    """
    m = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(np.sum(Y * logp)) / m
    return loss, (np.exp(logp) - Y) / m


def _check_batch(X: np.ndarray, n_inputs: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_inputs:
        raise DimensionError(f"expected batch of shape (m, {n_inputs}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input batch contains non-finite values")
    return X


def _forward(params, X, dropout, rng):
    """Return logits and the per-layer cache needed by backprop."""
    n_layers = len(params) // 2
    cache = []
    h = X
    for i in range(n_layers - 1):
        z = h @ params[2 * i] + params[2 * i + 1]
        a = np.maximum(z, 0.0)
        mask = None
        if rng is not None and dropout > 0:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        cache.append((h, z, mask))
        h = a
    cache.append((h, None, None))
    return h @ params[-2] + params[-1], cache


def _backward(params, cache, dlogits):
    grads = [None] * len(params)
    d = dlogits
    for i in range(len(params) // 2 - 1, -1, -1):
        h, _, _ = cache[i]
        grads[2 * i] = h.T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        if i > 0:
            d = d @ params[2 * i].T
            _, z_prev, mask_prev = cache[i - 1]
            if mask_prev is not None:
                d = d * mask_prev
            d = d * (z_prev > 0)
    return grads


def forward(model: MlpModel, X: np.ndarray, mode: str = "infer", dropout_seed: int | None = None,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class-probability rows for a batch.

    In ``"train"`` mode dropout masks are drawn from ``rng`` (or from a
    generator seeded with ``dropout_seed``); ``"infer"`` mode is deterministic.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    X = _check_batch(X, model.config.n_inputs)
    if mode == "train" and rng is None:
        rng = np.random.default_rng(check_seed(dropout_seed or 0))
    logits, _ = _forward(model.params, X, model.config.dropout, rng if mode == "train" else None)
    return softmax(logits)


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    Y = np.zeros((y.size, n_classes))
    Y[np.arange(y.size), y] = 1.0
    return Y


def loss_and_gradients(model: MlpModel, X: np.ndarray, Y: np.ndarray,
                       rng: np.random.Generator | None = None):
    """Mean cross-entropy and gradients ``[dW1, db1, ...]``.

    Dropout is applied only when ``rng`` is given.
    """
    X = _check_batch(X, model.config.n_inputs)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (X.shape[0], model.config.n_classes):
        raise DimensionError(f"labels must be one-hot of shape {(X.shape[0], model.config.n_classes)}")
    logits, cache = _forward(model.params, X, model.config.dropout, rng)
    loss, dlogits = softmax_cross_entropy(logits, Y)
    return loss, _backward(model.params, cache, dlogits)


# --------------------------------------------------------------------------
# optimizers
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def _check_grads(grads):
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingDivergedError(
                f"non-finite gradient in parameter {i} (shape {np.shape(g)}, {bad} bad entries)")


def _adam_inplace(params, grads, state: AdamState, lr, beta1, beta2, eps):
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def adam_step(params, grads, state: AdamState, step: int | None = None, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``.

    ``step`` is the 1-based counter after this update and defaults to
    ``state.t + 1``. Inputs are not modified.
    """
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")
    _check_grads(grads)
    t = state.t + 1 if step is None else step
    if t < 1:
        raise ValueError("Adam step counter must be >= 1")
    new_params = [np.array(p, dtype=np.float64, copy=True) for p in params]
    new_state = AdamState([m.copy() for m in state.m], [v.copy() for v in state.v], t - 1)
    _adam_inplace(new_params, grads, new_state, lr, beta1, beta2, eps)
    return new_params, new_state


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.zeros_like(params)

    def step(self, params, grads):
        _check_grads(grads)
        _adam_inplace(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


class SGD:
    def __init__(self, params, lr=1e-2):
        self.lr = lr

    def step(self, params, grads):
        _check_grads(grads)
        for p, g in zip(params, grads):
            p -= self.lr * g


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 100
    patience: int = 3
    min_delta: float = 1e-6
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        check_seed(self.seed)

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), "seed": seed})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        return cls(**d)

    def make_optimizer(self, params):
        if self.optimizer == "adam":
            return Adam(params, self.lr, self.beta1, self.beta2, self.eps)
        return SGD(params, self.lr)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]

    @property
    def best_val_accuracy(self) -> float:
        return self.val_accuracy[self.best_epoch - 1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainReport":
        return cls(**d)


# loss_grad(params, Xb, Yb, rng) -> (loss, grads, n_correct)
LossGrad = Callable[[list, np.ndarray, np.ndarray, np.random.Generator], tuple]
# evaluate(params, X, Y) -> (loss, accuracy)
Evaluate = Callable[[list, np.ndarray, np.ndarray], tuple]


def fit(params: list[np.ndarray], loss_grad: LossGrad, evaluate: Evaluate,
        X: np.ndarray, Y: np.ndarray, X_val: np.ndarray, Y_val: np.ndarray,
        cfg: TrainConfig, on_epoch: Callable[[int, list], None] | None = None):
    """Mini-batch training with early stopping on validation loss.

    ``params`` is updated in place and, on return, holds the snapshot from
    the epoch with the lowest validation loss. An epoch counts as an
    improvement only if it beats the best loss by more than ``min_delta``.
    """
    if len(X) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    opt = cfg.make_optimizer(params)
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    dropout_rng = make_rng(cfg.seed, "dropout")
    report = TrainReport()
    best_loss = np.inf
    best = [p.copy() for p in params]
    waited = 0
    n = len(X)
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, n_correct = loss_grad(params, X[idx], Y[idx], dropout_rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"training loss became non-finite at epoch {epoch}", epoch)
            try:
                opt.step(params, grads)
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"epoch {epoch}: {exc}", epoch) from None
            total_loss += loss * len(idx)
            correct += n_correct
        val_loss, val_acc = evaluate(params, X_val, Y_val)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"validation loss became non-finite at epoch {epoch}", epoch)
        report.train_loss.append(total_loss / n)
        report.train_accuracy.append(correct / n)
        report.val_loss.append(float(val_loss))
        report.val_accuracy.append(float(val_acc))
        report.stopped_epoch = epoch
        if on_epoch is not None:
            on_epoch(epoch, params)
        if val_loss < best_loss - cfg.min_delta:
            best_loss = val_loss
            report.best_epoch = epoch
            best = [p.copy() for p in params]
            waited = 0
        else:
            waited += 1
            if waited >= cfg.patience:
                break
    for p, b in zip(params, best):
        p[...] = b
    log.debug("training stopped at epoch %d, kept epoch %d", report.stopped_epoch, report.best_epoch)
    return params, report


def _mlp_fns(config: MlpConfig):
    def loss_grad(params, Xb, Yb, rng):
        logits, cache = _forward(params, Xb, config.dropout, rng)
        loss, dlogits = softmax_cross_entropy(logits, Yb)
        correct = int(np.sum(logits.argmax(axis=1) == Yb.argmax(axis=1)))
        return loss, _backward(params, cache, dlogits), correct

    def evaluate(params, Xv, Yv):
        logits, _ = _forward(params, Xv, config.dropout, None)
        loss, _ = softmax_cross_entropy(logits, Yv)
        return loss, float(np.mean(logits.argmax(axis=1) == Yv.argmax(axis=1)))

    return loss_grad, evaluate


def train_mlp(model: MlpModel, X: np.ndarray, y: np.ndarray, X_val: np.ndarray, y_val: np.ndarray,
              cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainReport]:
    """Train a copy of ``model``; labels are integer class codes."""
    C = model.config.n_classes
    X = _check_batch(X, model.config.n_inputs)
    X_val = _check_batch(X_val, model.config.n_inputs)
    params = [p.copy() for p in model.params]
    loss_grad, evaluate = _mlp_fns(model.config)
    params, report = fit(params, loss_grad, evaluate, X, one_hot(y, C), X_val, one_hot(y_val, C), cfg)
    return MlpModel.from_params(model.config, params), report


def evaluate_mlp(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    _, evaluate = _mlp_fns(model.config)
    return evaluate(model.params, _check_batch(X, model.config.n_inputs), one_hot(y, model.config.n_classes))


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_gradients(loss_fn: Callable[[list], float], params: list[np.ndarray], eps: float = 1e-5):
    """Central-difference gradient of ``loss_fn`` at ``params``."""
    if not eps > 0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    params = [np.array(p, dtype=np.float64, copy=True) for p in params]
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn(params)
            flat[k] = orig - eps
            down = loss_fn(params)
            flat[k] = orig
            gflat[k] = (up - down) / (2 * eps)
        out.append(g)
    return out


def numeric_gradient_check(model: MlpModel, X: np.ndarray, Y: np.ndarray, eps: float = 1e-5,
                           analytic: list[np.ndarray] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout is ignored (the check always runs the deterministic forward
    pass). Pass ``analytic`` to check an externally supplied gradient.
    """
    if not eps > 0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    X = _check_batch(X, model.config.n_inputs)
    if analytic is None:
        _, analytic = loss_and_gradients(model, X, Y)

    def loss_fn(params):
        logits, _ = _forward(params, X, 0.0, None)
        return softmax_cross_entropy(logits, Y)[0]

    numeric = numeric_gradients(loss_fn, model.params, eps)
    return max(float(relative_error(a, n).max()) for a, n in zip(analytic, numeric))

