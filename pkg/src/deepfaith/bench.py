"""Benchmark harness: method x metric score tables, rank aggregation, ablations
and per-sample latency."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .explainer_net import ExplainerNet, TrainConfig, train_explainer
from .explainers import DEFAULT_EXPLAINER_OPTIONS, explain
from .metrics import DEFAULT_CFG, LOWER_IS_BETTER, METRICS, EffectConfig, MetricReport, evaluate_dataset
from .models import predicted_target
from .perturb import RemovalStrategy

logger = logging.getLogger(__name__)

__all__ = [
    "BenchmarkResult",
    "average_ranks",
    "metric_ranks",
    "baseline_method",
    "measure_latency",
    "run_benchmark",
    "run_ablation",
    "emit_report",
]

RESULT_SCHEMA_VERSION = 1


def metric_ranks(scores: np.ndarray, metrics=METRICS) -> np.ndarray:
    """Direction-aware ranks per metric column (1 = best, ties share the mean rank)."""
    scores = np.asarray(scores, dtype=float)
    cols = []
    for j, m in enumerate(metrics):
        v = scores[:, j]
        cols.append(rankdata(v if m in LOWER_IS_BETTER else -v, method="average"))
    return np.column_stack(cols)


def average_ranks(scores: np.ndarray, metrics=METRICS) -> np.ndarray:
    return metric_ranks(scores, metrics).mean(axis=1)


@dataclass
class BenchmarkResult:
    methods: list
    scores: np.ndarray  # (methods, metrics)
    latency_ms: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)  # method -> reason
    curves: dict = field(default_factory=dict)  # method -> metric -> per-sample step values
    metrics: tuple = METRICS

    @property
    def directions(self) -> dict:
        return {m: ("lower" if m in LOWER_IS_BETTER else "higher") for m in self.metrics}

    @property
    def ranks(self) -> np.ndarray:
        return metric_ranks(self.scores, self.metrics)

    @property
    def average_rank(self) -> dict:
        return dict(zip(self.methods, self.ranks.mean(axis=1).tolist()))

    def to_dict(self, with_timing: bool = True) -> dict:
        out = {
            "schema_version": RESULT_SCHEMA_VERSION,
            "methods": list(self.methods),
            "metrics": list(self.metrics),
            "directions": self.directions,
            "scores": {m: dict(zip(self.metrics, row.tolist())) for m, row in zip(self.methods, self.scores)},
            "ranks": {m: dict(zip(self.metrics, row.tolist())) for m, row in zip(self.methods, self.ranks)},
            "average_rank": self.average_rank,
            "excluded": self.excluded,
            "config": self.config,
        }
        if with_timing:
            out["timing"] = {"latency_ms": self.latency_ms}
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkResult":
        if obj.get("schema_version") != RESULT_SCHEMA_VERSION:
            raise ValueError(f"unsupported benchmark schema {obj.get('schema_version')}")
        metrics = tuple(obj["metrics"])
        methods = list(obj["methods"])
        scores = np.array([[obj["scores"][m][k] for k in metrics] for m in methods], dtype=float)
        return cls(methods, scores, dict(obj.get("timing", {}).get("latency_ms", {})), obj.get("config", {}),
                   dict(obj.get("excluded", {})), metrics=metrics)


def baseline_method(name: str, model, strat: RemovalStrategy, cfg: EffectConfig = DEFAULT_CFG,
                    options: dict | None = None) -> Callable:
    """Callable ``x -> SaliencyExplanation`` explaining the predicted class."""
    options = dict(DEFAULT_EXPLAINER_OPTIONS.get(name, {}) if options is None else options)

    def run(x):
        return explain(name, x, predicted_target(model, x), strat, cfg, **options)

    run.__name__ = name
    return run


def measure_latency(method: Callable, X, runs: int = 50, warmup: int = 5) -> float:
    """Median wall-clock milliseconds per single-sample explanation."""
    X = np.asarray(X, dtype=float)
    for k in range(warmup):
        method(X[k % len(X)])
    times = []
    for k in range(runs):
        x = X[k % len(X)]
        t0 = time.perf_counter()
        method(x)
        times.append(time.perf_counter() - t0)
    return float(np.median(times) * 1e3)


def run_benchmark(X_test, model, methods: dict, strat: RemovalStrategy, cfg: EffectConfig = DEFAULT_CFG,
                  seed: int = 0, latency_runs: int = 50, warmup: int = 5, keep_curves: bool = False,
                  config: dict | None = None) -> BenchmarkResult:
    """Score every method on every metric, averaged over ``X_test``.

    ``methods`` maps a display name to a callable ``x -> explanation``. A
    method that raises is excluded with its reason and ranks are computed over
    the rest.
    """
    names, rows, latency, excluded, curves = [], [], {}, {}, {}
    for name, fn in methods.items():
        try:
            report = evaluate_dataset(fn, X_test, model, strat, cfg, seed=seed, keep_curves=keep_curves)
            if latency_runs:
                latency[name] = measure_latency(fn, X_test, latency_runs, warmup)
        except Exception as err:  # noqa: BLE001 - any explainer failure excludes the method
            logger.warning("benchmark: %s excluded (%s)", name, err)
            excluded[name] = f"{type(err).__name__}: {err}"
            continue
        names.append(name)
        rows.append(report.vector())
        if keep_curves:
            curves[name] = report.curves
    if not names:
        raise RuntimeError("every method failed")
    cfg_snapshot = {"effect": cfg.to_dict(), "seed": seed, "num_samples": int(len(X_test)),
                    "latency_runs": latency_runs, "warmup": warmup, **(config or {})}
    return BenchmarkResult(names, np.array(rows), latency, cfg_snapshot, excluded, curves)


def _report_for(net: ExplainerNet, X_test, model, strat, cfg, seed) -> MetricReport:
    return evaluate_dataset(net.explain, X_test, model, strat, cfg, seed=seed)


def run_ablation(Z, X_all, X_test, model, strat: RemovalStrategy, train_cfg: TrainConfig,
                 cfg: EffectConfig = DEFAULT_CFG, seed: int = 0) -> dict:
    """Train with both losses, PC only and LC only under one epoch budget.

    Returns ``{"L_OBJ": (net, log, report), "L_PC": ..., "L_LC": ...}``.
    """
    out = {}
    for label, loss in (("L_OBJ", "obj"), ("L_PC", "pc"), ("L_LC", "lc")):
        net, log = train_explainer(Z, X_all, model, strat, replace(train_cfg, loss=loss), cfg)
        out[label] = (net, log, _report_for(net, X_test, model, strat, cfg, seed))
    return out


def best_or_tied(reports: dict, target: str = "L_OBJ", tol: float = 1e-3) -> dict:
    """Per metric: whether ``target`` is within ``tol`` of the best direction-adjusted score."""
    out = {}
    for m in METRICS:
        vals = {k: r.scores[m] for k, r in reports.items()}
        best = min(vals.values()) if m in LOWER_IS_BETTER else max(vals.values())
        out[m] = abs(vals[target] - best) <= tol
    return out


def markdown_table(result: BenchmarkResult) -> str:
    head = ["Method", *[f"{m} {'↓' if m in LOWER_IS_BETTER else '↑'}" for m in result.metrics], "Avg rank"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    avg = result.average_rank
    best = min(avg.values())
    for name, row in zip(result.methods, result.scores):
        r = f"{avg[name]:.2f}"
        if avg[name] == best:
            r = f"**{r}**"
        lines.append("| " + " | ".join([name, *[f"{v:.3f}" for v in row], r]) + " |")
    return "\n".join(lines) + "\n"


def emit_report(result: BenchmarkResult, out_dir, formats=("json", "csv", "md", "curves"), stem: str = "benchmark",
                split_timing: bool = False) -> list:
    """Write the result as JSON, a CSV score matrix, a markdown rank table and curve data.

    With ``split_timing`` the latencies go to ``<stem>.timing.json`` so that the
    main JSON is reproducible byte for byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out_dir / f"{stem}.json"
        p.write_text(json.dumps(result.to_dict(not split_timing), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(p)
        if split_timing:
            p = out_dir / f"{stem}.timing.json"
            p.write_text(json.dumps({"latency_ms": result.latency_ms}, sort_keys=True, indent=2) + "\n",
                         encoding="utf-8")
            written.append(p)
    if "csv" in formats:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", *result.metrics, "avg_rank"])
        avg = result.average_rank
        for name, row in zip(result.methods, result.scores):
            w.writerow([name, *[repr(float(v)) for v in row], repr(avg[name])])
        p = out_dir / f"{stem}.csv"
        p.write_text(buf.getvalue(), encoding="utf-8")
        written.append(p)
    if "md" in formats:
        p = out_dir / f"{stem}.md"
        p.write_text(markdown_table(result), encoding="utf-8")
        written.append(p)
    if "curves" in formats and result.curves:
        p = out_dir / f"{stem}_curves.json"
        p.write_text(json.dumps(result.curves, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    return written
