"""Perturbation-based faithfulness metrics.

Saliency-side metrics (FC, FE, INF, MC) correlate local score sums over index
sets with the perturbation effect of removing those sets. Permutation-side
metrics (DEL, INS, NEG, POS, RP, IROF) follow a removal order. Curve
integrals with ceiling-step integrands are evaluated exactly as step means.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core_math import argsort_desc, check_permutation, correlation
from .models import PredictiveModel, TargetedModel, predicted_target
from .perturb import RemovalStrategy, all_subset_masks, remove_many, sample_masks

logger = logging.getLogger(__name__)

__all__ = [
    "METRICS",
    "SALIENCY_METRICS",
    "PERMUTATION_METRICS",
    "LOWER_IS_BETTER",
    "EffectConfig",
    "MetricReport",
    "delta",
    "delta_minus",
    "fc",
    "fe",
    "inf",
    "mc",
    "curve_metric",
    "removal_curve",
    "rp",
    "irof",
    "evaluate_all",
    "evaluate_dataset",
    "derive_seed",
]

SALIENCY_METRICS = ("FC", "FE", "INF", "MC")
PERMUTATION_METRICS = ("DEL", "INS", "NEG", "POS", "RP", "IROF")
METRICS = SALIENCY_METRICS + PERMUTATION_METRICS
LOWER_IS_BETTER = frozenset({"DEL", "POS"})
REPORT_SCHEMA_VERSION = 1
_METRIC_IDS = {m: i for i, m in enumerate(METRICS)}
_PROB_TOL = 1e-9


def derive_seed(seed: int, metric: str, index: int = 0) -> int:
    """Independent RNG seed per (global seed, metric, sample index)."""
    return int(np.random.SeedSequence([int(seed), _METRIC_IDS.get(metric, 99), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class EffectConfig:
    delta_kind: str = "abs_diff"  # abs_diff | half_squared
    delta_minus_kind: str = "confidence_ratio"  # confidence_ratio | raw_confidence
    tau_kind: str = "pearson"  # for FC, FE, INF
    mc_tau_kind: str = "spearman"
    flip_rule: str = "argmax"  # argmax | threshold
    flip_threshold: float = 0.5  # threshold rule: flip once delta >= this
    inf_samples: int = 128
    fe_samples: int = 128
    fc_budget: int | None = None  # None: exact enumeration when n <= 16
    mc_sequence: str = "singletons"  # singletons | prefixes

    def __post_init__(self):
        if self.delta_kind not in ("abs_diff", "half_squared"):
            raise ValueError(f"unknown delta kind {self.delta_kind!r}")
        if self.delta_minus_kind not in ("confidence_ratio", "raw_confidence"):
            raise ValueError(f"unknown delta_minus kind {self.delta_minus_kind!r}")
        for k in (self.tau_kind, self.mc_tau_kind):
            if k not in ("pearson", "spearman"):
                raise ValueError(f"unknown correlation kind {k!r}")
        if self.flip_rule not in ("argmax", "threshold"):
            raise ValueError(f"unknown flip rule {self.flip_rule!r}")
        if self.mc_sequence not in ("singletons", "prefixes"):
            raise ValueError(f"unknown MC sequence {self.mc_sequence!r}")

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_CFG = EffectConfig()


def _check_prob(y, name):
    y = np.asarray(y, dtype=float)
    if np.any(y < -_PROB_TOL) or np.any(y > 1 + _PROB_TOL) or not np.all(np.isfinite(y)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return np.clip(y, 0.0, 1.0)


def _delta(y1, y2, kind: str):
    diff = np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
    if kind == "abs_diff":
        return np.abs(diff)
    return 0.5 * diff * diff


def _delta_minus(y_orig, y_pert, kind: str):
    y_pert = np.asarray(y_pert, dtype=float)
    if kind == "raw_confidence":
        return y_pert
    if y_orig <= 0.0:
        logger.warning("confidence_ratio with zero original confidence; preservation set to 1")
        return np.ones_like(y_pert)
    return np.minimum(1.0, y_pert / y_orig)


def delta(y1: float, y2: float, cfg: EffectConfig = DEFAULT_CFG) -> float:
    """Perturbation effect between an original and a perturbed prediction."""
    y1, y2 = _check_prob(y1, "y1"), _check_prob(y2, "y2")
    return float(_delta(y1, y2, cfg.delta_kind))


def delta_minus(y_orig: float, y_pert: float, cfg: EffectConfig = DEFAULT_CFG) -> float:
    """Preservation effect: how much of the original prediction survives."""
    y_orig, y_pert = _check_prob(y_orig, "y_orig"), _check_prob(y_pert, "y_pert")
    return float(_delta_minus(float(y_orig), y_pert, cfg.delta_minus_kind))


def _scores(out) -> np.ndarray:
    return np.asarray(getattr(out, "scores", out), dtype=float).ravel()


def _targeted(model, x) -> TargetedModel:
    if isinstance(model, TargetedModel):
        return model
    return predicted_target(model, x)


def _effects(x, tm: TargetedModel, strat: RemovalStrategy, masks: np.ndarray, cfg: EffectConfig, call_offset=0):
    y0 = tm.f(x)
    ys = tm.f_batch(remove_many(x, masks, strat, call_offset))
    return y0, _delta(y0, ys, cfg.delta_kind)


def local_correlation(s, x, tm, strat, masks, cfg: EffectConfig = DEFAULT_CFG, tau: str | None = None) -> float:
    """tau between local sums of ``s`` over ``masks`` and their removal effects."""
    s = _scores(s)
    masks = np.asarray(masks, dtype=bool)
    _, d = _effects(x, tm, strat, masks, cfg)
    return correlation(masks @ s, d, tau or cfg.tau_kind)


def fc(s, x, tm, strat, cfg: EffectConfig = DEFAULT_CFG, subset_budget: int | None = None, seed: int = 0,
       unique: bool = False) -> float:
    """Faithfulness Correlation over all subsets of [n] (or a sampled family)."""
    n = np.asarray(x).shape[0]
    budget = subset_budget if subset_budget is not None else cfg.fc_budget
    if budget is None:
        masks = all_subset_masks(n)
    else:
        masks = sample_masks(n, budget, seed, unique=unique)
    return local_correlation(s, x, tm, strat, masks, cfg)


def fe(method: Callable, pairs: Sequence, model, strat, cfg: EffectConfig = DEFAULT_CFG) -> float:
    """Faithfulness Estimate across samples, one index set per sample.

    ``pairs`` holds ``(x, I)`` with ``I`` an index collection or boolean mask.
    """
    if len(pairs) < 2:
        raise ValueError("FE needs at least 2 (x, I) pairs")
    xs = [np.asarray(x, dtype=float) for x, _ in pairs]
    return _fe_core([_scores(method(x)) for x in xs], xs, [I for _, I in pairs], model, strat, cfg)


def _fe_core(expls, xs, index_sets, model, strat, cfg) -> float:
    sums, effects = [], []
    for i, (s, x, I) in enumerate(zip(expls, xs, index_sets)):
        mask = _as_mask(I, x.shape[0])
        _, d = _effects(x, _targeted(model, x), strat, mask[None], cfg, call_offset=i)
        sums.append(s @ mask)
        effects.append(d[0])
    return correlation(sums, effects, cfg.tau_kind)


def _as_mask(I, n):
    I = np.asarray(I)
    if I.dtype == bool and I.shape == (n,):
        return I
    mask = np.zeros(n, dtype=bool)
    if I.size:
        if I.min() < 0 or I.max() >= n:
            raise IndexError(f"index set out of range for n={n}")
        mask[I.astype(int)] = True
    return mask


def inf(s, x, tm, strat, cfg: EffectConfig = DEFAULT_CFG, N: int | None = None, seed: int = 0,
        unique: bool = False) -> float:
    """Infidelity with N index sets drawn uniformly from the power set."""
    N = cfg.inf_samples if N is None else N
    if N < 2:
        raise ValueError("INF needs N >= 2")
    n = np.asarray(x).shape[0]
    masks = sample_masks(n, N, seed, unique=unique)
    return local_correlation(s, x, tm, strat, masks, cfg)


def mc(s, x, tm, strat, cfg: EffectConfig = DEFAULT_CFG, sequence_mode: str | None = None) -> float:
    """Monotonicity Correlation over a fixed perturbation sequence."""
    s = _scores(s)
    n = s.size
    if n < 2:
        raise ValueError("MC needs n >= 2")
    mode = sequence_mode or cfg.mc_sequence
    if mode == "singletons":
        masks = sample_masks(n, mode="singletons")
    elif mode == "prefixes":
        masks = sample_masks(n, mode="prefix_of", perm=argsort_desc(s))
    else:
        raise ValueError(f"unknown MC sequence {mode!r}")
    return local_correlation(s, x, tm, strat, masks, cfg, tau=cfg.mc_tau_kind)


def _prefix_masks(perm: np.ndarray) -> np.ndarray:
    return sample_masks(perm.size, mode="prefix_of", perm=perm)


def _flip_index(P0: np.ndarray, P: np.ndarray, y0: float, ys: np.ndarray, cfg: EffectConfig) -> int:
    """Least number of removals that changes the prediction; n if none does."""
    if cfg.flip_rule == "argmax":
        flipped = np.argmax(P, axis=-1) != np.argmax(P0)
    else:
        flipped = _delta(y0, ys, cfg.delta_kind) >= cfg.flip_threshold
    hits = np.flatnonzero(flipped)
    return int(hits[0]) + 1 if hits.size else len(ys)


def removal_curve(perm, x, tm: TargetedModel, strat, cfg: EffectConfig = DEFAULT_CFG, mode: str = "DEL") -> dict:
    """Per-step values behind the curve metrics.

    Returns a dict with ``y0``, ``ys`` (target probability after each step),
    ``preservation`` (Delta^- per step), ``effect`` (Delta per step) and ``t``
    (number of steps averaged: n except for NEG and POS).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty instance")
    perm = check_permutation(perm, n)
    if mode not in ("DEL", "INS", "NEG", "POS"):
        raise ValueError(f"unknown curve mode {mode!r}")
    order = perm[::-1] if mode == "NEG" else perm
    masks = _prefix_masks(order)
    if mode == "INS":
        masks = ~masks
    X = remove_many(x, masks, strat)
    P0 = np.asarray(tm.model.predict_proba(x))
    P = np.asarray(tm.model.predict_proba(X))
    y0 = float(P0[tm.target_class])
    ys = P[:, tm.target_class]
    if y0 <= 0.0 and cfg.delta_minus_kind == "confidence_ratio":
        raise ValueError("curve metrics need f(x) > 0")
    pres = _delta_minus(y0, ys, cfg.delta_minus_kind)
    t = _flip_index(P0, P, y0, ys, cfg) if mode in ("NEG", "POS") else n
    return {"y0": y0, "ys": ys, "preservation": pres, "effect": _delta(y0, ys, cfg.delta_kind), "t": t}


def curve_metric(perm, x, tm: TargetedModel, strat, cfg: EffectConfig = DEFAULT_CFG, mode: str = "DEL") -> float:
    """DEL / INS / NEG / POS as exact step averages of the preservation effect."""
    c = removal_curve(perm, x, tm, strat, cfg, mode)
    return float(np.mean(c["preservation"][: c["t"]]))


def _perm_of(method_or_perms, i, x):
    if callable(method_or_perms):
        out = method_or_perms(x)
    else:
        out = method_or_perms[i]
    out = np.asarray(getattr(out, "scores", out))
    if np.issubdtype(out.dtype, np.integer):
        return check_permutation(out, x.shape[0])
    return argsort_desc(out)


def rp(method, X, model, strat, cfg: EffectConfig = DEFAULT_CFG) -> float:
    """Region Perturbation averaged over samples.

    ``method`` is a callable ``x -> permutation`` (saliency outputs are ranked)
    or a sequence with one permutation per sample.
    """
    X = _as_stack(X)
    vals = []
    for i, x in enumerate(X):
        tm = _targeted(model, x)
        c = removal_curve(_perm_of(method, i, x), x, tm, strat, cfg, "DEL")
        vals.append(c["effect"].sum() / (x.shape[0] + 1))  # j = 0 term is 0
    return float(np.mean(vals))


def irof(method, X, model, strat, cfg: EffectConfig = DEFAULT_CFG) -> float:
    """Iterative Removal of Features: mean area over the preservation curve."""
    X = _as_stack(X)
    vals = []
    for i, x in enumerate(X):
        tm = _targeted(model, x)
        c = removal_curve(_perm_of(method, i, x), x, tm, strat, cfg, "DEL")
        vals.append(np.mean(1.0 - c["preservation"]))
    return float(np.mean(vals))


def _as_stack(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or len(X) < 1:
        raise ValueError("expected a nonempty (N, n, d) stack of instances")
    return X


# -- reports ---------------------------------------------------------------


@dataclass
class MetricReport:
    scores: dict
    config: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)

    @property
    def directions(self) -> dict:
        return {m: ("lower" if m in LOWER_IS_BETTER else "higher") for m in METRICS}

    def vector(self) -> np.ndarray:
        return np.array([self.scores[m] for m in METRICS])

    def to_dict(self, with_timing: bool = True) -> dict:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "scores": {m: float(self.scores[m]) for m in METRICS},
            "directions": self.directions,
            "config": self.config,
        }
        if with_timing:
            out["timing"] = self.timing
        return out

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.to_dict(with_timing), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricReport":
        if obj.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {obj.get('schema_version')}")
        return cls(scores=dict(obj["scores"]), config=obj.get("config", {}), timing=obj.get("timing", {}))


def _fe_pairs_single(x, n, count, seed):
    masks = sample_masks(n, count, seed, nonempty=True)
    return [(x, m) for m in masks]


def evaluate_all(s, x, tm: TargetedModel, strat, cfg: EffectConfig = DEFAULT_CFG, seed: int = 0,
                 sample_index: int = 0) -> MetricReport:
    """All ten metrics for one saliency explanation of one instance.

    FE is computed on ``fe_samples`` (x, I) pairs sharing this instance, with
    I drawn uniformly from the nonempty subsets; the permutation metrics use
    the descending-order ranking of ``s``.
    """
    s = _scores(s)
    x = np.asarray(x, dtype=float)
    if s.size != x.shape[0]:
        raise ValueError(f"explanation length {s.size} does not match n={x.shape[0]}")
    n = x.shape[0]
    perm = argsort_desc(s)
    scores, timing = {}, {}

    def timed(name, fn):
        t0 = time.perf_counter()
        scores[name] = float(fn())
        timing[name] = time.perf_counter() - t0

    timed("FC", lambda: fc(s, x, tm, strat, cfg, seed=derive_seed(seed, "FC", sample_index)))
    timed("FE", lambda: fe(lambda _: s, _fe_pairs_single(x, n, cfg.fe_samples, derive_seed(seed, "FE", sample_index)),
                           tm, strat, cfg))
    timed("INF", lambda: inf(s, x, tm, strat, cfg, seed=derive_seed(seed, "INF", sample_index)))
    timed("MC", lambda: mc(s, x, tm, strat, cfg))
    for mode in ("DEL", "INS", "NEG", "POS"):
        timed(mode, lambda mode=mode: curve_metric(perm, x, tm, strat, cfg, mode))
    timed("RP", lambda: rp([perm], x[None], tm, strat, cfg))
    timed("IROF", lambda: irof([perm], x[None], tm, strat, cfg))
    return MetricReport(scores, {"effect": cfg.to_dict(), "seed": seed, "scope": "instance"}, timing)


def evaluate_dataset(method: Callable, X, model, strat, cfg: EffectConfig = DEFAULT_CFG, seed: int = 0,
                     explanations: Sequence | None = None, keep_curves: bool = False) -> MetricReport:
    """Ten metrics for a saliency method over a stack of instances.

    Instance-level metrics are averaged over samples; FE pairs each sample with
    one nonempty index set. ``model`` may be a :class:`TargetedModel` (fixed
    class) or a bare model (each sample targets its predicted class).
    Precomputed ``explanations`` bypass ``method``.
    """
    X = _as_stack(X)
    N, n = X.shape[0], X.shape[1]
    expl = [_scores(e) for e in explanations] if explanations is not None else [_scores(method(x)) for x in X]
    per = {m: [] for m in METRICS if m != "FE"}
    timing = {m: 0.0 for m in METRICS}
    curves = {m: [] for m in ("DEL", "INS", "RP", "IROF")}
    for i, (x, s) in enumerate(zip(X, expl)):
        tm = _targeted(model, x)
        perm = argsort_desc(s)
        t0 = time.perf_counter()
        per["FC"].append(fc(s, x, tm, strat, cfg, seed=derive_seed(seed, "FC", i)))
        t1 = time.perf_counter()
        per["INF"].append(inf(s, x, tm, strat, cfg, seed=derive_seed(seed, "INF", i)))
        t2 = time.perf_counter()
        per["MC"].append(mc(s, x, tm, strat, cfg))
        t3 = time.perf_counter()
        timing["FC"] += t1 - t0
        timing["INF"] += t2 - t1
        timing["MC"] += t3 - t2
        for mode in ("DEL", "INS", "NEG", "POS"):
            t0 = time.perf_counter()
            c = removal_curve(perm, x, tm, strat, cfg, mode)
            per[mode].append(float(np.mean(c["preservation"][: c["t"]])))
            timing[mode] += time.perf_counter() - t0
            if mode == "DEL":
                per["RP"].append(c["effect"].sum() / (n + 1))
                per["IROF"].append(float(np.mean(1.0 - c["preservation"])))
                if keep_curves:
                    curves["DEL"].append(c["preservation"].tolist())
                    curves["RP"].append(c["effect"].tolist())
                    curves["IROF"].append((1.0 - c["preservation"]).tolist())
            elif mode == "INS" and keep_curves:
                curves["INS"].append(c["preservation"].tolist())
    t0 = time.perf_counter()
    if N >= 2:
        masks = sample_masks(n, N, derive_seed(seed, "FE", 0), nonempty=True)
        fe_score = _fe_core(expl, list(X), list(masks), model, strat, cfg)
    else:
        fe_score = fe(lambda _: expl[0], _fe_pairs_single(X[0], n, cfg.fe_samples, derive_seed(seed, "FE", 0)),
                      model, strat, cfg)
    timing["FE"] = time.perf_counter() - t0
    scores = {m: float(np.mean(v)) for m, v in per.items()}
    scores["FE"] = float(fe_score)
    report = MetricReport(scores, {"effect": cfg.to_dict(), "seed": seed, "scope": "dataset", "num_samples": N}, timing)
    if keep_curves:
        report.curves = curves
    return report
