"""Trainable amortized explainer with hand-derived gradients.

The network maps an instance ``x`` of shape ``(n, d)`` to scores in
``[0, 1]^n``::

    h   = tanh(x W_enc + b_enc + P)            per-element encoder, P positional
    h  += tanh(W_mix vec(h) + b_mix)           repeated ``depth`` times
    s   = sigmoid(h w_head + b_head)

It is trained on a blend of a pattern-consistency loss against supervised
saliency signals and a local-correlation loss against the model's removal
effects, weighted by a sigmoid schedule over epochs.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_math import minmax_normalize
from .explainers import SaliencyExplanation
from .metrics import DEFAULT_CFG, EffectConfig, _delta
from .models import TargetedModel, predicted_target
from .perturb import RemovalStrategy, all_subset_masks, remove_many, sample_masks

logger = logging.getLogger(__name__)

__all__ = [
    "ExplainerNet",
    "TrainConfig",
    "TrainingLog",
    "ExplainerDiverged",
    "forward",
    "alpha",
    "loss_pc",
    "loss_lc",
    "loss_obj",
    "lc_targets",
    "gradcheck",
    "train_explainer",
    "save_explainer",
    "load_explainer",
]

CHECKPOINT_FORMAT = "deepfaith.explainer"
CHECKPOINT_VERSION = 1


class ExplainerDiverged(RuntimeError):
    def __init__(self, msg, last_good: "ExplainerNet | None" = None):
        super().__init__(msg)
        self.last_good = last_good


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class ExplainerNet:
    def __init__(self, params: dict, n: int, d: int, hidden: int, depth: int):
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}
        self.n, self.d, self.hidden, self.depth = int(n), int(d), int(hidden), int(depth)
        self._check()

    def _check(self):
        n, d, H = self.n, self.d, self.hidden
        want = {"W_enc": (d, H), "b_enc": (H,), "P": (n, H), "w_head": (H,), "b_head": ()}
        for l in range(self.depth):
            want[f"W_mix{l}"] = (n * H, n * H)
            want[f"b_mix{l}"] = (n * H,)
        if set(want) != set(self.params):
            raise ValueError(f"parameter names {sorted(self.params)} do not match architecture")
        for k, shape in want.items():
            if self.params[k].shape != shape:
                raise ValueError(f"{k} has shape {self.params[k].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[k])):
                raise ValueError(f"{k} has non-finite entries")

    @classmethod
    def init(cls, n: int, d: int = 1, hidden: int = 16, depth: int = 1, seed: int = 0,
             zero_head: bool = False) -> "ExplainerNet":
        rng = np.random.default_rng(seed)
        H = hidden
        p = {
            "W_enc": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, H)),
            "b_enc": np.zeros(H),
            "P": rng.normal(0.0, 0.5, size=(n, H)),
            "w_head": np.zeros(H) if zero_head else rng.normal(0.0, 1.0 / np.sqrt(H), size=H),
            "b_head": np.zeros(()),
        }
        for l in range(depth):
            p[f"W_mix{l}"] = rng.normal(0.0, 0.5 / np.sqrt(n * H), size=(n * H, n * H))
            p[f"b_mix{l}"] = np.zeros(n * H)
        return cls(p, n, d, hidden, depth)

    @property
    def architecture(self) -> dict:
        return {"n": self.n, "d": self.d, "hidden": self.hidden, "depth": self.depth,
                "encoder": "per-element tanh + positional", "mixing": "dense tanh residual",
                "squash": "sigmoid"}

    def copy(self) -> "ExplainerNet":
        return ExplainerNet({k: v.copy() for k, v in self.params.items()}, self.n, self.d, self.hidden, self.depth)

    def _stack(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 2
        if X.ndim == 1:
            X, single = X[:, None], True
        if single:
            X = X[None]
        if X.shape[1:] != (self.n, self.d):
            raise ValueError(f"input shape {X.shape[1:]} does not match explainer input {(self.n, self.d)}")
        return X, single

    def _forward(self, X):
        p = self.params
        B = len(X)
        h = np.tanh(X @ p["W_enc"] + p["b_enc"] + p["P"])
        cache = {"X": X, "e0": h, "mix": []}
        for l in range(self.depth):
            flat = h.reshape(B, -1)
            g = np.tanh(flat @ p[f"W_mix{l}"].T + p[f"b_mix{l}"])
            cache["mix"].append((flat, g))
            h = h + g.reshape(h.shape)
        s = _sigmoid(h @ p["w_head"] + p["b_head"])
        cache["h"], cache["s"] = h, s
        return s, cache

    def _predict(self, X):
        # inference-only forward pass, no cache
        p = self.params
        h = np.tanh(X @ p["W_enc"] + p["b_enc"] + p["P"])
        for l in range(self.depth):
            g = np.tanh(h.reshape(len(X), -1) @ p[f"W_mix{l}"].T + p[f"b_mix{l}"])
            h = h + g.reshape(h.shape)
        return _sigmoid(h @ p["w_head"] + p["b_head"])

    def _predict_one(self, x):
        # single instance (n, d): plain 2-d products avoid batched-matmul overhead
        p = self.params
        h = np.tanh(x @ p["W_enc"] + p["b_enc"] + p["P"])
        for l in range(self.depth):
            h = h + np.tanh(p[f"W_mix{l}"] @ h.ravel() + p[f"b_mix{l}"]).reshape(h.shape)
        return _sigmoid(h @ p["w_head"] + p["b_head"])

    def __call__(self, X) -> np.ndarray:
        X, single = self._stack(X)
        return self._predict_one(X[0]) if single else self._predict(X)

    def _backward(self, cache, ds: np.ndarray) -> dict:
        p = self.params
        s, h, X = cache["s"], cache["h"], cache["X"]
        B = len(X)
        do = ds * s * (1.0 - s)
        grads = {"w_head": np.einsum("bn,bnh->h", do, h), "b_head": np.asarray(do.sum())}
        dh = do[:, :, None] * p["w_head"]
        for l in range(self.depth - 1, -1, -1):
            flat, g = cache["mix"][l]
            dz = dh.reshape(B, -1) * (1.0 - g * g)
            grads[f"W_mix{l}"] = dz.T @ flat
            grads[f"b_mix{l}"] = dz.sum(axis=0)
            dh = dh + (dz @ p[f"W_mix{l}"]).reshape(dh.shape)
        e0 = cache["e0"]
        dz0 = dh * (1.0 - e0 * e0)
        grads["W_enc"] = np.einsum("bnd,bnh->dh", X, dz0)
        grads["b_enc"] = dz0.sum(axis=(0, 1))
        grads["P"] = dz0.sum(axis=0)
        return grads

    def explain(self, x, normalize: bool = True) -> SaliencyExplanation:
        """Saliency for one instance.

        The sigmoid output is min-max normalized like every other explainer's
        (both training losses are scale-free, so the sigmoid's offset and
        spread carry no information); ``raw`` keeps the forward output.
        """
        out = self(x)
        scores = minmax_normalize(out) if normalize else out
        return SaliencyExplanation(scores, "deepfaith", out, {"architecture": self.architecture,
                                                               "normalization": "minmax" if normalize else "none"})

    def to_dict(self) -> dict:
        return {"architecture": self.architecture,
                "params": {k: v.tolist() for k, v in sorted(self.params.items())}}

    @classmethod
    def from_dict(cls, obj: dict) -> "ExplainerNet":
        a = obj["architecture"]
        return cls(obj["params"], a["n"], a["d"], a["hidden"], a["depth"])


def forward(net: ExplainerNet, x) -> SaliencyExplanation:
    return net.explain(x)


# -- correlation gradients --------------------------------------------------


def _pearson_rows(A: np.ndarray, Bm: np.ndarray):
    """Row-wise Pearson r and dr/dA; degenerate rows give r = 0, grad = 0."""
    Ac = A - A.mean(axis=-1, keepdims=True)
    Bc = Bm - Bm.mean(axis=-1, keepdims=True)
    na = np.sqrt((Ac * Ac).sum(axis=-1))
    nb = np.sqrt((Bc * Bc).sum(axis=-1))
    scale_a = np.maximum(1.0, np.abs(A).max(axis=-1))
    scale_b = np.maximum(1.0, np.abs(Bm).max(axis=-1))
    ok = (na > 1e-12 * scale_a) & (nb > 1e-12 * scale_b)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    r = np.where(ok, (Ac * Bc).sum(axis=-1) / (na_s * nb_s), 0.0)
    grad = Bc / (na_s * nb_s)[:, None] - (r / na_s ** 2)[:, None] * Ac
    grad[~ok] = 0.0
    return r, grad


def _cosine_rows(A: np.ndarray, Bm: np.ndarray):
    na = np.linalg.norm(A, axis=-1)
    nb = np.linalg.norm(Bm, axis=-1)
    ok = (na > 0) & (nb > 0)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    r = np.where(ok, (A * Bm).sum(axis=-1) / (na_s * nb_s), 0.0)
    grad = Bm / (na_s * nb_s)[:, None] - (r / na_s ** 2)[:, None] * A
    grad[~ok] = 0.0
    return r, grad


_SIMILARITY = {"pearson": _pearson_rows, "cosine": _cosine_rows}


# -- losses -----------------------------------------------------------------


def _pc_value_grad(net: ExplainerNet, X, S, tau: str = "pearson", need_grad: bool = True):
    X, _ = net._stack(X)
    S = np.asarray(S, dtype=float).reshape(len(X), net.n)
    if len(X) == 0:
        raise ValueError("empty batch")
    out, cache = net._forward(X)
    r, dr = _SIMILARITY[tau](out, S)
    value = float(np.mean(1.0 - r))
    if not need_grad:
        return value, None
    return value, net._backward(cache, -dr / len(X))


def loss_pc(net: ExplainerNet, pairs, tau: str = "pearson") -> float:
    """Mean of ``1 - tau(net(x), s)`` over ``(x, s)`` pairs."""
    X = np.stack([np.asarray(x, dtype=float).reshape(net.n, net.d) for x, _ in pairs])
    S = np.stack([np.asarray(getattr(s, "scores", s), dtype=float) for _, s in pairs])
    return _pc_value_grad(net, X, S, tau, need_grad=False)[0]


def _lc_value_grad(net: ExplainerNet, X, masks, deltas, need_grad: bool = True):
    """``masks`` is (M, n) shared or (B, M, n) per sample; ``deltas`` is (B, M)."""
    X, _ = net._stack(X)
    out, cache = net._forward(X)
    masks = np.asarray(masks, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    if masks.ndim == 2:
        sums = out @ masks.T
    else:
        sums = np.einsum("bmn,bn->bm", masks, out)
    r, dr = _pearson_rows(sums, deltas)
    value = float(-np.mean(r))
    if not need_grad:
        return value, None
    dsums = -dr / len(X)
    ds = dsums @ masks if masks.ndim == 2 else np.einsum("bm,bmn->bn", dsums, masks)
    return value, net._backward(cache, ds)


def lc_targets(model, X, strat: RemovalStrategy, masks, cfg: EffectConfig = DEFAULT_CFG) -> np.ndarray:
    """Removal effects Delta[f(x), f(x \\ I)] for every sample and index set.

    ``model`` is a :class:`TargetedModel` or a bare model (each sample then
    targets its predicted class). Returns shape (B, M).
    """
    X = np.asarray(X, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    out = []
    for b, x in enumerate(X):
        m = masks if masks.ndim == 2 else masks[b]
        tm = model if isinstance(model, TargetedModel) else predicted_target(model, x)
        ys = tm.f_batch(remove_many(x, m, strat))
        out.append(_delta(tm.f(x), ys, cfg.delta_kind))
    return np.asarray(out)


def lc_masks(n: int, M: int | None, seed: int, epoch: int, sample_ids: Sequence[int], exact: bool) -> np.ndarray:
    """Index sets for the local-correlation loss: all subsets, or M per sample."""
    if exact:
        return all_subset_masks(n)
    return np.stack([sample_masks(n, M, seed=[seed, epoch, int(i)]) for i in sample_ids])


def loss_lc(net: ExplainerNet, X, model, strat: RemovalStrategy, cfg: EffectConfig = DEFAULT_CFG,
            M: int | None = None, seed: int = 0, exact: bool | None = None, unique: bool = False) -> float:
    """Negative mean over samples of tau(local sums of net(x), removal effects).

    Exact mode (default when ``M`` is None) enumerates every subset of [n].
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    n = X.shape[1]
    exact = M is None if exact is None else exact
    if exact:
        masks = all_subset_masks(n)
    else:
        if M is None or M < 2:
            raise ValueError("sampled local-correlation loss needs M >= 2")
        masks = np.stack([sample_masks(n, M, seed=[seed, i], unique=unique) for i in range(len(X))])
    deltas = lc_targets(model, X, strat, masks, cfg)
    return _lc_value_grad(net, X, masks, deltas, need_grad=False)[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    optimizer: str = "momentum"  # momentum | adam
    weight_decay: float = 0.0
    hidden: int = 16
    depth: int = 1
    e_mid: float | None = None  # default 0.6 * epochs
    width: float | None = None  # default 0.08 * epochs
    lc_mode: str = "sampled"  # sampled | exact
    lc_subsets: int = 64
    pc_tau: str = "pearson"  # pearson | cosine
    lc_tau: str = "pearson"
    loss: str = "obj"  # obj | pc | lc
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden < 1 or self.depth < 0:
            raise ValueError("epochs, batch_size, hidden must be positive and depth nonnegative")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lc_mode not in ("sampled", "exact"):
            raise ValueError(f"unknown lc_mode {self.lc_mode!r}")
        if self.pc_tau not in _SIMILARITY:
            raise ValueError(f"unknown pc_tau {self.pc_tau!r}")
        if self.lc_tau != "pearson":
            raise ValueError("the local-correlation loss is differentiable only with pearson")
        if self.loss not in ("obj", "pc", "lc"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.width is not None and not self.width > 0:
            raise ValueError("alpha width must be > 0")
        if self.lc_mode == "sampled" and self.lc_subsets < 2:
            raise ValueError("lc_subsets must be >= 2")

    @property
    def alpha_mid(self) -> float:
        return 0.6 * self.epochs if self.e_mid is None else self.e_mid

    @property
    def alpha_width(self) -> float:
        return 0.08 * self.epochs if self.width is None else self.width

    def to_dict(self) -> dict:
        out = asdict(self)
        out["e_mid"], out["width"] = self.alpha_mid, self.alpha_width
        return out


def alpha(epoch: float, cfg: TrainConfig | None = None, e_mid: float | None = None, width: float | None = None) -> float:
    """PC/LC weight: ``1 - logistic((epoch - e_mid) / width)``, decreasing in epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if cfg is not None:
        e_mid = cfg.alpha_mid if e_mid is None else e_mid
        width = cfg.alpha_width if width is None else width
    if e_mid is None or width is None or not width > 0:
        raise ValueError("alpha needs e_mid and a positive width")
    return float(1.0 - _sigmoid((epoch - e_mid) / width))


def _obj_value_grad(net, pc_batch, lc_batch, a: float, tau: str = "pearson", need_grad: bool = True):
    """alpha * L_PC + (1 - alpha) * L_LC; ``lc_batch`` is (X, masks, deltas)."""
    vals, grads = {}, None
    if a > 0.0:
        vals["pc"], g = _pc_value_grad(net, *pc_batch, tau=tau, need_grad=need_grad)
        grads = None if g is None else {k: a * v for k, v in g.items()}
    else:
        vals["pc"] = _pc_value_grad(net, *pc_batch, tau=tau, need_grad=False)[0] if pc_batch is not None else float("nan")
    if a < 1.0:
        vals["lc"], g = _lc_value_grad(net, *lc_batch, need_grad=need_grad)
        if g is not None:
            grads = {k: (1 - a) * v + (grads[k] if grads else 0.0) for k, v in g.items()}
    else:
        vals["lc"] = _lc_value_grad(net, *lc_batch, need_grad=False)[0] if lc_batch is not None else float("nan")
    pc_term = a * vals["pc"] if a > 0 else 0.0
    lc_term = (1 - a) * vals["lc"] if a < 1 else 0.0
    vals["obj"] = pc_term + lc_term
    return vals, grads


def loss_obj(net: ExplainerNet, pairs, X, model, strat: RemovalStrategy, epoch: float, cfg: TrainConfig,
             effect_cfg: EffectConfig = DEFAULT_CFG, a: float | None = None) -> float:
    """Blended objective at ``epoch`` (or at an explicit weight ``a``)."""
    a = alpha(epoch, cfg) if a is None else a
    Xp = np.stack([np.asarray(x, dtype=float).reshape(net.n, net.d) for x, _ in pairs])
    Sp = np.stack([np.asarray(getattr(s, "scores", s), dtype=float) for _, s in pairs])
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    exact = cfg.lc_mode == "exact"
    masks = lc_masks(net.n, cfg.lc_subsets, cfg.seed, int(epoch), range(len(X)), exact)
    deltas = lc_targets(model, X, strat, masks, effect_cfg)
    return _obj_value_grad(net, (Xp, Sp), (X, masks, deltas), a, cfg.pc_tau, need_grad=False)[0]["obj"]


# -- gradient check ---------------------------------------------------------


def gradcheck(net: ExplainerNet, loss_kind: str, probe: dict, h: float = 1e-4, floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``probe`` holds ``X`` and either ``S`` (pc; optional ``tau``) or ``masks``
    and ``deltas`` (lc). The relative error of each parameter entry is
    ``|a - f| / max(|a|, |f|, floor)``.
    """
    if loss_kind == "pc":
        fn = lambda need: _pc_value_grad(net, probe["X"], probe["S"], probe.get("tau", "pearson"), need)
    elif loss_kind == "lc":
        fn = lambda need: _lc_value_grad(net, probe["X"], probe["masks"], probe["deltas"], need)
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    _, analytic = fn(True)
    worst = 0.0
    for name, param in net.params.items():
        flat = param.reshape(-1)
        g_an = np.asarray(analytic[name]).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = fn(False)[0]
            flat[i] = old - h
            down = fn(False)[0]
            flat[i] = old
            g_fd = (up - down) / (2 * h)
            err = abs(g_an[i] - g_fd) / max(abs(g_an[i]), abs(g_fd), floor)
            worst = max(worst, err)
    return worst


# -- training ---------------------------------------------------------------


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)

    def append(self, epoch, a, lpc, llc, lobj):
        self.rows.append({"epoch": int(epoch), "alpha": float(a), "loss_pc": float(lpc), "loss_lc": float(llc),
                          "loss_obj": float(lobj)})

    def column(self, key) -> np.ndarray:
        return np.array([r[key] for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "alpha", "loss_pc", "loss_lc", "loss_obj"], lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


class _Optimizer:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        c = self.cfg
        self.t += 1
        for k, g in grads.items():
            g = g + c.weight_decay * params[k]
            if c.optimizer == "momentum":
                self.m[k] = c.momentum * self.m[k] - c.lr * g
                params[k] += self.m[k]
            else:
                b1, b2 = 0.9, 0.999
                self.m[k] = b1 * self.m[k] + (1 - b1) * g
                self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
                mhat = self.m[k] / (1 - b1 ** self.t)
                vhat = self.v[k] / (1 - b2 ** self.t)
                params[k] -= c.lr * mhat / (np.sqrt(vhat) + 1e-8)


def train_explainer(Z, X_all, model, strat: RemovalStrategy, cfg: TrainConfig = TrainConfig(),
                    effect_cfg: EffectConfig = DEFAULT_CFG) -> tuple[ExplainerNet, TrainingLog]:
    """Mini-batch training over the signal pairs ``Z``.

    ``Z`` is a sequence of signal pairs exposing ``sample_index`` and
    ``saliency`` (see :mod:`deepfaith.signals`); ``X_all[sample_index]`` is the
    instance. Each mini-batch of pairs supplies the pattern-consistency term and
    its distinct instances supply the local-correlation term.
    """
    if len(Z) < 1:
        raise ValueError("no signal pairs to train on")
    if len(Z) < cfg.batch_size:
        raise ValueError(f"|Z| = {len(Z)} is smaller than the batch size {cfg.batch_size}")
    X_all = np.asarray(X_all, dtype=float)
    if X_all.ndim == 2:
        X_all = X_all[:, :, None]
    n, d = X_all.shape[1:]
    sample_ids = np.array([p.sample_index for p in Z])
    S = np.stack([np.asarray(getattr(p.saliency, "scores", p.saliency), dtype=float) for p in Z])
    net = ExplainerNet.init(n, d, cfg.hidden, cfg.depth, seed=cfg.seed)
    opt = _Optimizer(net.params, cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    exact = cfg.lc_mode == "exact"
    used = np.unique(sample_ids)
    if exact:
        masks_all = all_subset_masks(n)
        deltas_all = dict(zip(used.tolist(), lc_targets(model, X_all[used], strat, masks_all, effect_cfg)))
    log = TrainingLog()
    last_good = net.copy()
    for epoch in range(cfg.epochs):
        a = {"obj": alpha(epoch, cfg), "pc": 1.0, "lc": 0.0}[cfg.loss]
        if not exact:
            epoch_masks = dict(zip(used.tolist(), lc_masks(n, cfg.lc_subsets, cfg.seed, epoch, used, False)))
            epoch_deltas = dict(zip(used.tolist(),
                                    lc_targets(model, X_all[used], strat, np.stack([epoch_masks[i] for i in used]),
                                               effect_cfg)))
        order = rng.permutation(len(Z))
        sums = {"pc": 0.0, "lc": 0.0, "obj": 0.0}
        batches = 0
        for start in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            ids = np.unique(sample_ids[idx])
            if exact:
                lc_batch = (X_all[ids], masks_all, np.stack([deltas_all[i] for i in ids]))
            else:
                lc_batch = (X_all[ids], np.stack([epoch_masks[i] for i in ids]),
                            np.stack([epoch_deltas[i] for i in ids]))
            vals, grads = _obj_value_grad(net, (X_all[sample_ids[idx]], S[idx]), lc_batch, a, cfg.pc_tau)
            if not np.isfinite(vals["obj"]) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise ExplainerDiverged(f"non-finite loss at epoch {epoch}", last_good)
            opt.step(net.params, grads)
            for k in sums:
                sums[k] += vals[k]
            batches += 1
        if not all(np.all(np.isfinite(v)) for v in net.params.values()):
            raise ExplainerDiverged(f"non-finite parameters after epoch {epoch}", last_good)
        last_good = net.copy()
        log.append(epoch, a, sums["pc"] / batches, sums["lc"] / batches, sums["obj"] / batches)
        logger.debug("epoch %d alpha %.3f pc %.4f lc %.4f", epoch, a, sums["pc"] / batches, sums["lc"] / batches)
    return net, log


def save_explainer(net: ExplainerNet, path, train_cfg: TrainConfig | None = None, log: TrainingLog | None = None,
                   extra: dict | None = None) -> None:
    obj = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **net.to_dict()}
    if train_cfg is not None:
        obj["train_config"] = train_cfg.to_dict()
    if log is not None and log.rows:
        obj["final_losses"] = log.rows[-1]
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def load_explainer(path) -> ExplainerNet:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != CHECKPOINT_FORMAT or obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version-{CHECKPOINT_VERSION} explainer checkpoint")
    return ExplainerNet.from_dict(obj)
