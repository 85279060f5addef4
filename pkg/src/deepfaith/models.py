"""Models under explanation.

Every model maps an ``(n, d)`` instance (or an ``(B, n, d)`` stack) to class
probabilities. :class:`TargetedModel` pins the class whose probability is the
scalar ``f(x)`` used by all metrics and explainers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)

__all__ = [
    "PredictiveModel",
    "TargetedModel",
    "LinearSoftmax",
    "MlpModel",
    "AdditiveModel",
    "ConstantModel",
    "f_scalar",
    "input_gradient",
    "finite_difference_gradient",
    "predicted_target",
    "train_model",
    "save_model",
    "load_model",
    "TrainingDiverged",
]

CHECKPOINT_FORMAT = "deepfaith.model"
CHECKPOINT_VERSION = 1
FD_STEP = 1e-4


@runtime_checkable
class PredictiveModel(Protocol):
    input_shape: tuple[int, int]
    num_classes: int

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


class TrainingDiverged(RuntimeError):
    pass


def _stack(X, input_shape) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[1:] != tuple(input_shape):
        raise ValueError(f"input shape {X.shape[1:]} does not match model input {tuple(input_shape)}")
    return X, single


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "sigmoid": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), lambda z, a: a * (1.0 - a)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(float)),
}


class MlpModel:
    """Fully connected softmax classifier over the flattened instance.

    ``weights[l]`` has shape ``(out, in)``. Hidden layers use ``activation``
    (smooth ``tanh`` by default, ``relu`` available).
    """

    arch = "mlp"

    def __init__(self, weights, biases, input_shape, activation: str = "tanh", seed: int | None = None):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.input_shape = tuple(int(s) for s in input_shape)
        self.activation = activation
        self.seed = seed
        self.history: list[float] = []
        fan_in = int(np.prod(self.input_shape))
        for W, b in zip(self.weights, self.biases):
            if W.shape[1] != fan_in or b.shape != (W.shape[0],):
                raise ValueError("inconsistent layer shapes")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")
            fan_in = W.shape[0]
        self.num_classes = self.weights[-1].shape[0]

    @classmethod
    def init(cls, input_shape, hidden, num_classes, activation="tanh", seed=0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        sizes = [int(np.prod(input_shape)), *hidden, num_classes]
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            ws.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, input_shape, activation, seed)

    def _forward(self, A: np.ndarray):
        act, _ = _ACTIVATIONS[self.activation]
        zs, acts = [], [A]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = A @ W.T + b
            A = act(z)
            zs.append(z)
            acts.append(A)
        logits = A @ self.weights[-1].T + self.biases[-1]
        return zs, acts, _softmax(logits)

    def predict_proba(self, X) -> np.ndarray:
        X, single = _stack(X, self.input_shape)
        P = self._forward(X.reshape(len(X), -1))[2]
        return P[0] if single else P

    def _backward(self, zs, acts, dlogits):
        """Parameter gradients and input gradient given d(loss)/d(logits)."""
        _, dact = _ACTIVATIONS[self.activation]
        gW = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        G = dlogits
        for l in range(len(self.weights) - 1, -1, -1):
            gW[l] = G.T @ acts[l]
            gb[l] = G.sum(axis=0)
            G = G @ self.weights[l]
            if l > 0:
                G = G * dact(zs[l - 1], acts[l])
        return gW, gb, G

    def input_gradient(self, x, cls: int) -> np.ndarray:
        return self.input_gradient_batch(np.asarray(x)[None], cls)[0]

    def input_gradient_batch(self, X, cls: int) -> np.ndarray:
        X, _ = _stack(X, self.input_shape)
        zs, acts, P = self._forward(X.reshape(len(X), -1))
        onehot = np.zeros_like(P)
        onehot[:, cls] = 1.0
        dlogits = P[:, [cls]] * (onehot - P)
        return self._backward(zs, acts, dlogits)[2].reshape(X.shape)

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "activation": self.activation,
            "input_shape": list(self.input_shape),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
        }


class LinearSoftmax(MlpModel):
    """Multinomial logistic regression: an MLP without hidden layers."""

    arch = "linear"

    def __init__(self, W, b, input_shape, seed: int | None = None, activation: str = "tanh"):
        super().__init__([W], [b], input_shape, activation, seed)

    @classmethod
    def init(cls, input_shape, hidden=(), num_classes=2, activation="tanh", seed=0) -> "LinearSoftmax":
        m = MlpModel.init(input_shape, (), num_classes, activation, seed)
        return cls(m.weights[0], m.biases[0], input_shape, seed)

    @property
    def W(self) -> np.ndarray:
        return self.weights[0]


class AdditiveModel:
    """Two-class model with ``p_1(x) = bias + sum_i coefs_i * sum(x_i)``.

    The caller is responsible for keeping ``p_1`` inside [0, 1] on the inputs
    it evaluates. Used as a ground-truth task: removal effects are additive.
    """

    arch = "additive"
    num_classes = 2

    def __init__(self, bias: float, coefs, d: int = 1):
        self.bias = float(bias)
        self.coefs = np.asarray(coefs, dtype=float).ravel()
        self.input_shape = (self.coefs.size, int(d))

    def predict_proba(self, X) -> np.ndarray:
        X, single = _stack(X, self.input_shape)
        p1 = self.bias + X.sum(axis=2) @ self.coefs
        P = np.stack([1.0 - p1, p1], axis=-1)
        return P[0] if single else P

    def input_gradient(self, x, cls: int) -> np.ndarray:
        g = np.repeat(self.coefs[:, None], self.input_shape[1], axis=1)
        return g if cls == 1 else -g


class ConstantModel:
    """Ignores its input and always returns ``probs``."""

    arch = "constant"

    def __init__(self, probs, input_shape):
        self.probs = np.asarray(probs, dtype=float)
        self.num_classes = self.probs.size
        self.input_shape = tuple(input_shape)

    def predict_proba(self, X) -> np.ndarray:
        X, single = _stack(X, self.input_shape)
        P = np.broadcast_to(self.probs, (len(X), self.num_classes)).copy()
        return P[0] if single else P

    def input_gradient(self, x, cls: int) -> np.ndarray:
        return np.zeros(self.input_shape)


@dataclass(frozen=True)
class TargetedModel:
    model: PredictiveModel
    target_class: int

    def __post_init__(self):
        if not 0 <= self.target_class < self.model.num_classes:
            raise ValueError(f"target class {self.target_class} outside [0, {self.model.num_classes})")

    @property
    def input_shape(self) -> tuple[int, int]:
        return tuple(self.model.input_shape)

    def f(self, x) -> float:
        return float(self.model.predict_proba(x)[self.target_class])

    def f_batch(self, X) -> np.ndarray:
        return np.asarray(self.model.predict_proba(X))[:, self.target_class]

    def predicted_classes(self, X) -> np.ndarray:
        return np.argmax(self.model.predict_proba(X), axis=-1)


def predicted_target(model: PredictiveModel, x) -> TargetedModel:
    """Target the class the model predicts for ``x``."""
    return TargetedModel(model, int(np.argmax(model.predict_proba(x))))


def f_scalar(tm: TargetedModel, x) -> float:
    return tm.f(x)


def finite_difference_gradient(tm: TargetedModel, x, h: float = FD_STEP) -> np.ndarray:
    """Central differences of ``f`` with respect to every input entry."""
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    E = np.eye(n * d).reshape(n * d, n, d) * h
    plus = tm.f_batch(x[None] + E)
    minus = tm.f_batch(x[None] - E)
    return ((plus - minus) / (2 * h)).reshape(n, d)


def input_gradient(tm: TargetedModel, x, h: float = FD_STEP) -> np.ndarray:
    """d f / d x, analytic when the model provides it, else central differences."""
    x = np.asarray(x, dtype=float)
    if x.shape != tm.input_shape:
        raise ValueError(f"input shape {x.shape} does not match model input {tm.input_shape}")
    grad_fn = getattr(tm.model, "input_gradient", None)
    if grad_fn is not None:
        return np.asarray(grad_fn(x, tm.target_class), dtype=float)
    return finite_difference_gradient(tm, x, h)


# -- training ---------------------------------------------------------------

DEFAULT_TRAIN = {
    "hidden": [16],
    "activation": "tanh",
    "epochs": 200,
    "lr": 0.1,
    "momentum": 0.9,
    "batch_size": 32,
    "weight_decay": 0.0,
}


def _cross_entropy(P: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(np.log(np.clip(P[np.arange(len(y)), y], 1e-300, None))))


def train_model(dataset: Dataset, architecture: str = "mlp", hyperparams: dict | None = None, seed: int = 0) -> MlpModel:
    """Mini-batch momentum SGD on cross-entropy over the training split.

    The per-epoch mean training loss is kept in ``model.history``; the loss at
    initialization is ``history[0]``.
    """
    hp = {**DEFAULT_TRAIN, **(hyperparams or {})}
    X, y = dataset.X_train, dataset.y_train
    if len(X) == 0:
        raise ValueError("empty training split")
    num_classes = max(2, dataset.num_classes)
    input_shape = (dataset.n, dataset.d)
    if architecture == "mlp":
        model = MlpModel.init(input_shape, hp["hidden"], num_classes, hp["activation"], seed)
    elif architecture == "linear":
        model = LinearSoftmax.init(input_shape, num_classes=num_classes, seed=seed)
    else:
        raise ValueError(f"unknown architecture {architecture!r}")

    rng = np.random.default_rng(seed + 1)
    A = X.reshape(len(X), -1)
    vW = [np.zeros_like(w) for w in model.weights]
    vb = [np.zeros_like(b) for b in model.biases]
    history = [_cross_entropy(model._forward(A)[2], y)]
    bs = int(hp["batch_size"])
    step = 0
    for epoch in range(int(hp["epochs"])):
        order = rng.permutation(len(A))
        for start in range(0, len(A), bs):
            idx = order[start:start + bs]
            zs, acts, P = model._forward(A[idx])
            dlogits = P.copy()
            dlogits[np.arange(len(idx)), y[idx]] -= 1.0
            dlogits /= len(idx)
            gW, gb, _ = model._backward(zs, acts, dlogits)
            for l in range(len(model.weights)):
                vW[l] = hp["momentum"] * vW[l] - hp["lr"] * (gW[l] + hp["weight_decay"] * model.weights[l])
                vb[l] = hp["momentum"] * vb[l] - hp["lr"] * gb[l]
                model.weights[l] += vW[l]
                model.biases[l] += vb[l]
            step += 1
            if not all(np.all(np.isfinite(w)) for w in model.weights):
                raise TrainingDiverged(f"non-finite parameters at step {step} (epoch {epoch})")
        loss = _cross_entropy(model._forward(A)[2], y)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step} (epoch {epoch})")
        history.append(loss)
    logger.info("trained %s: loss %.4f -> %.4f", architecture, history[0], history[-1])
    model.history = history
    return model


def accuracy(model: PredictiveModel, X, y) -> float:
    return float(np.mean(np.argmax(model.predict_proba(X), axis=-1) == np.asarray(y)))


# -- checkpoints ------------------------------------------------------------


def model_to_dict(model) -> dict:
    if isinstance(model, MlpModel):
        body = model.to_dict()
    elif isinstance(model, AdditiveModel):
        body = {"arch": "additive", "bias": model.bias, "coefs": model.coefs.tolist(), "input_shape": list(model.input_shape)}
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **body}


def model_from_dict(obj: dict):
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
    arch = obj["arch"]
    if arch == "mlp":
        return MlpModel(obj["weights"], obj["biases"], obj["input_shape"], obj["activation"], obj.get("seed"))
    if arch == "linear":
        return LinearSoftmax(obj["weights"][0], obj["biases"][0], obj["input_shape"], obj.get("seed"))
    if arch == "additive":
        return AdditiveModel(obj["bias"], obj["coefs"], obj["input_shape"][1])
    raise ValueError(f"unknown architecture {arch!r}")


def save_model(model, path, extra: dict | None = None) -> None:
    obj = model_to_dict(model)
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
