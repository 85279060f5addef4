"""Baseline saliency explainers and an exact Shapley oracle.

Every explainer returns a :class:`SaliencyExplanation` whose ``scores`` are
min-max normalized into [0, 1] (constant raw vectors map to all 0.5) and whose
``raw`` field keeps the unnormalized attributions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .core_math import minmax_normalize
from .metrics import DEFAULT_CFG, EffectConfig, _delta
from .models import TargetedModel, input_gradient
from .perturb import RemovalStrategy, all_subset_masks, remove_many

logger = logging.getLogger(__name__)

__all__ = [
    "SaliencyExplanation",
    "occlusion",
    "feature_ablation",
    "saliency_grad",
    "integrated_gradients",
    "lime",
    "kernel_shap",
    "exact_shapley",
    "contiguous_groups",
    "EXPLAINERS",
    "explain",
]


@dataclass
class SaliencyExplanation:
    scores: np.ndarray
    method: str
    raw: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float).ravel()
        lo, hi = self.scores.min(), self.scores.max()
        if not (lo >= 0 and hi <= 1):  # also rejects NaN and inf
            raise ValueError(f"{self.method}: saliency scores must be finite and in [0, 1]")

    def to_dict(self) -> dict:
        out = {"method_tag": self.method, "scores": self.scores.tolist(), "seed": self.seed, "config": self.config}
        if self.raw is not None:
            out["raw"] = np.asarray(self.raw, dtype=float).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "SaliencyExplanation":
        raw = obj.get("raw")
        return cls(np.asarray(obj["scores"]), obj["method_tag"], None if raw is None else np.asarray(raw),
                   obj.get("config", {}), obj.get("seed"))


def _wrap(raw, method, config=None, seed=None) -> SaliencyExplanation:
    raw = np.asarray(raw, dtype=float).ravel()
    return SaliencyExplanation(minmax_normalize(raw), method, raw, config or {}, seed)


def occlusion(x, tm: TargetedModel, strat: RemovalStrategy, cfg: EffectConfig = DEFAULT_CFG) -> SaliencyExplanation:
    """Perturbation effect of removing each element on its own."""
    x = np.asarray(x, dtype=float)
    masks = np.eye(x.shape[0], dtype=bool)
    ys = tm.f_batch(remove_many(x, masks, strat))
    return _wrap(_delta(tm.f(x), ys, cfg.delta_kind), "occlusion", {"delta": cfg.delta_kind})


def contiguous_groups(n: int, size: int) -> list[list[int]]:
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


def feature_ablation(x, tm: TargetedModel, strat: RemovalStrategy, groups=None,
                     cfg: EffectConfig = DEFAULT_CFG, group_size: int | None = None) -> SaliencyExplanation:
    """Perturbation effect of removing each group, shared by its members.

    Without explicit ``groups`` the elements are split into contiguous runs of
    ``group_size`` (singletons when that is None as well).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if groups is None:
        groups = contiguous_groups(n, group_size or 1)
    groups = [list(map(int, g)) for g in groups]
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(n)) or any(len(g) == 0 for g in groups):
        raise ValueError(f"groups must partition range({n}): {groups}")
    masks = np.zeros((len(groups), n), dtype=bool)
    for k, g in enumerate(groups):
        masks[k, g] = True
    effects = _delta(tm.f(x), tm.f_batch(remove_many(x, masks, strat)), cfg.delta_kind)
    raw = masks.T.astype(float) @ effects
    return _wrap(raw, "feature_ablation", {"groups": groups, "delta": cfg.delta_kind})


def saliency_grad(x, tm: TargetedModel) -> SaliencyExplanation:
    """Per-element L2 norm of the input gradient of the target probability."""
    g = input_gradient(tm, np.asarray(x, dtype=float))
    return _wrap(np.linalg.norm(g, axis=1), "saliency")


def _path_gradients(tm: TargetedModel, X: np.ndarray) -> np.ndarray:
    batch = getattr(tm.model, "input_gradient_batch", None)
    if batch is not None:
        return np.asarray(batch(X, tm.target_class))
    return np.stack([input_gradient(tm, xi) for xi in X])


def integrated_gradients(x, tm: TargetedModel, baseline, steps: int = 64) -> SaliencyExplanation:
    """Straight-line path integral of gradients from ``baseline`` to ``x``.

    Uses the midpoint rule with ``steps`` gradient evaluations; raw
    attributions are summed over each element block.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=float)
    baseline = np.broadcast_to(np.asarray(baseline, dtype=float).reshape(x.shape[0], -1), x.shape)
    alphas = (np.arange(steps) + 0.5) / steps
    path = baseline[None] + alphas[:, None, None] * (x - baseline)[None]
    mean_grad = _path_gradients(tm, path).mean(axis=0)
    raw = ((x - baseline) * mean_grad).sum(axis=1)
    return _wrap(raw, "integrated_gradients", {"steps": steps})


def _weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float) -> np.ndarray:
    """Weighted ridge regression with an unpenalized intercept; returns slopes."""
    A = np.hstack([np.ones((len(Z), 1)), Z])
    AtW = A.T * w
    G = AtW @ A
    G[1:, 1:] += ridge * np.eye(Z.shape[1])
    if not np.isfinite(np.linalg.cond(G)) or np.linalg.cond(G) > 1e12:
        raise np.linalg.LinAlgError(f"ill-conditioned system (cond={np.linalg.cond(G):.3g})")
    return np.linalg.solve(G, AtW @ y)[1:]


def lime(x, tm: TargetedModel, strat: RemovalStrategy, num_samples: int = 256, kernel_width: float = 0.25,
         ridge: float = 1e-3, seed: int = 0, masks: np.ndarray | None = None) -> SaliencyExplanation:
    """Local weighted linear surrogate over random keep/remove masks.

    The first mask keeps everything. Samples are weighted by an exponential
    kernel of the cosine distance between the keep-mask and the all-ones mask.
    A singular fit is retried with a ten-fold larger ridge until solvable.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if masks is None:
        if num_samples < n + 2:
            raise ValueError(f"LIME needs at least n + 2 = {n + 2} samples")
        rng = np.random.default_rng(seed)
        keep = rng.random((num_samples, n)) < 0.5
        keep[0] = True
    else:
        keep = np.asarray(masks, dtype=bool)
    ys = tm.f_batch(remove_many(x, ~keep, strat))
    kept = keep.sum(axis=1)
    cos = np.where(kept > 0, kept / np.sqrt(np.maximum(kept, 1) * n), 0.0)
    dist = 1.0 - cos
    w = np.exp(-(dist ** 2) / kernel_width ** 2)
    lam = ridge
    retries = 0
    while True:
        try:
            coef = _weighted_ridge(keep.astype(float), ys, w, lam)
            break
        except np.linalg.LinAlgError as err:
            retries += 1
            if retries > 20:
                raise
            new = max(lam * 10.0, 1e-6)
            logger.warning("lime: %s; raising ridge %.3g -> %.3g", err, lam, new)
            lam = new
    return _wrap(coef, "lime", {"num_samples": len(keep), "kernel_width": kernel_width, "ridge": ridge,
                                "ridge_used": lam, "singular_retries": retries}, seed)


def shapley_kernel_weight(n: int, size: np.ndarray) -> np.ndarray:
    size = np.asarray(size)
    return (n - 1) / (np.array([comb(n, int(k)) for k in size.ravel()]).reshape(size.shape) * size * (n - size))


def _coalition_values(x, tm, strat, present: np.ndarray) -> np.ndarray:
    """v(S) = f(x with every element outside S removed)."""
    return tm.f_batch(remove_many(x, ~present, strat))


def kernel_shap(x, tm: TargetedModel, strat: RemovalStrategy, num_samples: int | None = None,
                seed: int = 0, max_exact_n: int = 12) -> SaliencyExplanation:
    """Kernel SHAP: Shapley-kernel weighted least squares with exact efficiency.

    Enumerates every proper nonempty coalition when ``n <= max_exact_n`` and
    ``num_samples`` is None; otherwise samples coalitions with probability
    proportional to the kernel weight.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("Kernel SHAP needs n >= 2")
    if num_samples is None and n <= max_exact_n:
        Z = all_subset_masks(n)[1:-1]
        w = shapley_kernel_weight(n, Z.sum(axis=1))
        mode = "exact"
    else:
        rng = np.random.default_rng(seed)
        sizes = np.arange(1, n)
        p = shapley_kernel_weight(n, sizes) * np.array([comb(n, int(k)) for k in sizes])
        p /= p.sum()
        count = int(num_samples or 2048)
        draws = rng.choice(sizes, size=count, p=p)
        Z = np.zeros((count, n), dtype=bool)
        for r, k in enumerate(draws):
            Z[r, rng.choice(n, size=k, replace=False)] = True
        w = np.ones(count)
        mode = "sampled"
    v_empty, v_full = _coalition_values(x, tm, strat, np.array([[False] * n, [True] * n]))
    vz = _coalition_values(x, tm, strat, Z)
    total = v_full - v_empty
    Zf = Z.astype(float)
    # substitute phi_last = total - sum(others) to enforce efficiency
    A = Zf[:, :-1] - Zf[:, [-1]]
    y = vz - v_empty - Zf[:, -1] * total
    AtW = A.T * w
    G = AtW @ A
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > 1e10:
        logger.warning("kernel_shap: ill-conditioned system (condition estimate %.3g)", cond)
        phi_head = np.linalg.lstsq(G, AtW @ y, rcond=None)[0]
    else:
        phi_head = np.linalg.solve(G, AtW @ y)
    raw = np.append(phi_head, total - phi_head.sum())
    return _wrap(raw, "kernel_shap", {"mode": mode, "coalitions": int(len(Z)), "condition": cond}, seed)


def exact_shapley(x, tm: TargetedModel, strat: RemovalStrategy, max_n: int = 12) -> np.ndarray:
    """Exact Shapley values of the removal game by full coalition enumeration."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n > max_n:
        raise ValueError(f"exact Shapley limited to n <= {max_n} (2^n evaluations), got n={n}")
    masks = all_subset_masks(n)
    v = _coalition_values(x, tm, strat, masks)
    codes = np.arange(2 ** n)
    sizes = masks.sum(axis=1)
    weight = np.array([factorial(k) * factorial(n - k - 1) / factorial(n) if k < n else 0.0 for k in range(n + 1)])
    phi = np.empty(n)
    for i in range(n):
        without = codes[~masks[:, i]]
        phi[i] = np.sum(weight[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def _shapley_expl(x, tm, strat):
    return _wrap(exact_shapley(x, tm, strat), "exact_shapley")


EXPLAINERS = {
    "occlusion": lambda x, tm, strat, cfg, **kw: occlusion(x, tm, strat, cfg),
    "feature_ablation": lambda x, tm, strat, cfg, **kw: feature_ablation(
        x, tm, strat, kw.get("groups"), cfg, kw.get("group_size")),
    "saliency": lambda x, tm, strat, cfg, **kw: saliency_grad(x, tm),
    "integrated_gradients": lambda x, tm, strat, cfg, **kw: integrated_gradients(
        x, tm, strat.baseline, kw.get("steps", 64)),
    "lime": lambda x, tm, strat, cfg, **kw: lime(
        x, tm, strat, kw.get("num_samples", 256), kw.get("kernel_width", 0.25), kw.get("ridge", 1e-3),
        kw.get("seed", 0)),
    "kernel_shap": lambda x, tm, strat, cfg, **kw: kernel_shap(x, tm, strat, kw.get("num_samples"), kw.get("seed", 0)),
    "exact_shapley": lambda x, tm, strat, cfg, **kw: _shapley_expl(x, tm, strat),
}


# Tabular data has no natural segments, so feature ablation removes contiguous
# pairs by default; with singletons it would duplicate occlusion exactly.
DEFAULT_EXPLAINER_OPTIONS = {"feature_ablation": {"group_size": 2}}


def explain(method: str, x, tm: TargetedModel, strat: RemovalStrategy, cfg: EffectConfig = DEFAULT_CFG,
            **options) -> SaliencyExplanation:
    """Run a registered explainer by tag; ``options`` are method parameters."""
    try:
        fn = EXPLAINERS[method]
    except KeyError:
        raise ValueError(f"unknown explainer {method!r}; known: {sorted(EXPLAINERS)}") from None
    return fn(x, tm, strat, cfg, **options)
