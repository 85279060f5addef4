"""Supervised explanation signals.

For each sample: run K baseline explainers, drop near-duplicate explanations
by cosine similarity, keep the ones that clear a per-metric quantile threshold
on all ten faithfulness metrics, and pair the survivors with the instance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core_math import cosine_similarity, quantile
from .explainers import DEFAULT_EXPLAINER_OPTIONS, SaliencyExplanation, explain
from .metrics import DEFAULT_CFG, LOWER_IS_BETTER, METRICS, EffectConfig, evaluate_all
from .models import predicted_target
from .perturb import RemovalStrategy

logger = logging.getLogger(__name__)

__all__ = [
    "EvaluatedExplanation",
    "SignalPair",
    "PipelineConfig",
    "generate_signals",
    "dedup",
    "filter_explanations",
    "global_thresholds",
    "build_pairs",
    "run_pipeline",
    "write_signals",
    "read_signals",
]


@dataclass
class EvaluatedExplanation:
    saliency: SaliencyExplanation
    scores: dict  # metric name -> score

    @property
    def method(self) -> str:
        return self.saliency.method


@dataclass
class SignalPair:
    instance: np.ndarray
    saliency: SaliencyExplanation
    sample_index: int
    metric_scores: dict = field(default_factory=dict)

    @property
    def source_method(self) -> str:
        return self.saliency.method


@dataclass(frozen=True)
class PipelineConfig:
    methods: tuple = ("occlusion", "feature_ablation", "saliency", "integrated_gradients", "lime", "kernel_shap")
    dedup_threshold: float = 0.95
    p: float = 0.5
    global_threshold: bool = False
    seed: int = 0
    explainer_options: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_EXPLAINER_OPTIONS.items()})

    def __post_init__(self):
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValueError("dedup_threshold must lie in (0, 1]")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if len(self.methods) < 2:
            raise ValueError("the signal pipeline needs at least 2 explainers")


def _method_options(cfg: PipelineConfig, method: str, index: int) -> dict:
    opts = dict(cfg.explainer_options.get(method, {}))
    if method in ("lime", "kernel_shap"):
        opts.setdefault("seed", int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0]))
    return opts


def generate_signals(X, model, strat: RemovalStrategy, cfg: PipelineConfig,
                     effect_cfg: EffectConfig = DEFAULT_CFG) -> list[list[EvaluatedExplanation]]:
    """K evaluated explanations per sample, in method-list order.

    A failing explainer drops only its own entry for that sample.
    """
    out = []
    for i, x in enumerate(np.asarray(X, dtype=float)):
        tm = predicted_target(model, x)
        row = []
        for method in cfg.methods:
            try:
                expl = explain(method, x, tm, strat, effect_cfg, **_method_options(cfg, method, i))
                report = evaluate_all(expl, x, tm, strat, effect_cfg, seed=cfg.seed, sample_index=i)
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
                logger.warning("sample %d: explainer %s failed (%s); dropped", i, method, err)
                continue
            row.append(EvaluatedExplanation(expl, report.scores))
        out.append(row)
    return out


def _vector(e) -> np.ndarray:
    if isinstance(e, EvaluatedExplanation):
        e = e.saliency
    if isinstance(e, SaliencyExplanation):
        return e.scores
    return np.asarray(e, dtype=float).ravel()


def dedup(expls: Sequence, threshold: float = 0.95) -> tuple[list, int]:
    """Greedy cosine grouping in list order; returns the group heads and their count.

    An explanation joins the first retained head it is at least ``threshold``
    similar to; otherwise it starts a new group.
    """
    if len(expls) < 1:
        raise ValueError("nothing to deduplicate")
    heads = []
    for e in expls:
        v = _vector(e)
        if not any(cosine_similarity(v, hv) >= threshold for hv, _ in heads):
            heads.append((v, e))
    return [e for _, e in heads], len(heads)


def _score_matrix(expls) -> np.ndarray:
    return np.array([[e.scores[m] for m in METRICS] for e in expls], dtype=float)


def thresholds_for(scores: np.ndarray, p: float) -> np.ndarray:
    """Per-metric thresholds: p-quantile, or (1 - p)-quantile for lower-better metrics."""
    return np.array([quantile(scores[:, j], 1.0 - p if m in LOWER_IS_BETTER else p) for j, m in enumerate(METRICS)])


def global_thresholds(retained_lists: Sequence[Sequence[EvaluatedExplanation]], p: float) -> np.ndarray:
    """Thresholds pooled over every sample's retained explanations."""
    pooled = [e for lst in retained_lists for e in lst]
    return thresholds_for(_score_matrix(pooled), p)


def _passes(scores: np.ndarray, thr: np.ndarray) -> np.ndarray:
    lower = np.array([m in LOWER_IS_BETTER for m in METRICS])
    return np.where(lower, scores <= thr, scores >= thr).all(axis=1)


def filter_explanations(retained: Sequence[EvaluatedExplanation], p: float = 0.5,
                        thresholds: np.ndarray | None = None) -> tuple[list, int]:
    """Keep the explanations clearing every metric threshold.

    If none clear them all, the one with the best mean direction-adjusted rank
    is kept so that no sample vanishes.
    """
    if len(retained) < 1:
        raise ValueError("nothing to filter")
    scores = _score_matrix(retained)
    thr = thresholds_for(scores, p) if thresholds is None else np.asarray(thresholds)
    keep = _passes(scores, thr)
    if not keep.any():
        signs = np.array([-1.0 if m in LOWER_IS_BETTER else 1.0 for m in METRICS])
        ranks = np.column_stack([rankdata(-signs[j] * scores[:, j]) for j in range(len(METRICS))])
        best = int(np.argmin(ranks.mean(axis=1)))
        logger.debug("no explanation cleared every threshold; keeping best-ranked %s", retained[best].method)
        return [retained[best]], 1
    kept = [e for e, k in zip(retained, keep) if k]
    return kept, len(kept)


def build_pairs(X, kept_lists: Sequence[Sequence[EvaluatedExplanation]]) -> list[SignalPair]:
    """One pair per kept explanation, replicating the instance as needed."""
    X = np.asarray(X, dtype=float)
    Z = []
    for i, kept in enumerate(kept_lists):
        for e in kept:
            Z.append(SignalPair(X[i], e.saliency, i, dict(e.scores)))
    return Z


def run_pipeline(X, model, strat: RemovalStrategy, cfg: PipelineConfig,
                 effect_cfg: EffectConfig = DEFAULT_CFG) -> tuple[list[SignalPair], dict]:
    """generate -> dedup -> filter -> build_pairs; returns Z and per-sample counts."""
    evaluated = generate_signals(X, model, strat, cfg, effect_cfg)
    retained, k_dedup = [], []
    for row in evaluated:
        if not row:
            retained.append([])
            k_dedup.append(0)
            continue
        r, k = dedup(row, cfg.dedup_threshold)
        retained.append(r)
        k_dedup.append(k)
    thr = global_thresholds([r for r in retained if r], cfg.p) if cfg.global_threshold else None
    kept, k_filter = [], []
    for r in retained:
        if not r:
            kept.append([])
            k_filter.append(0)
            continue
        kp, k = filter_explanations(r, cfg.p, thr)
        kept.append(kp)
        k_filter.append(k)
    stats = {"K": [len(r) for r in evaluated], "K_dedup": k_dedup, "K_filter": k_filter,
             "kept_methods": [[e.method for e in kp] for kp in kept]}
    return build_pairs(X, kept), stats


def write_signals(Z: Sequence[SignalPair], path, config_hash: str | None = None) -> None:
    """JSON-lines artifact, one record per signal pair."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in Z:
            rec = {
                "sample_index": int(p.sample_index),
                "instance": np.asarray(p.instance).tolist(),
                "explanation": p.saliency.to_dict(),
                "source_method": p.source_method,
                "metric_scores": {m: float(p.metric_scores[m]) for m in METRICS},
            }
            if config_hash is not None:
                rec["config_hash"] = config_hash
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_signals(path) -> tuple[list[SignalPair], set]:
    """Pairs and the set of config hashes found in the artifact."""
    Z, hashes = [], set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        hashes.add(rec.get("config_hash"))
        Z.append(SignalPair(np.asarray(rec["instance"], dtype=float),
                            SaliencyExplanation.from_dict(rec["explanation"]),
                            rec["sample_index"], rec["metric_scores"]))
    return Z, hashes
