"""Command-line entry point.

Subcommands mirror the workflow: ``train-model`` -> ``signals`` ->
``train-explainer`` -> ``benchmark``, plus ``explain`` and ``evaluate`` for
single instances. Configuration is a JSON object of flat dotted keys; command
flags override file values and the merged config is written beside the
outputs of every run.

Every artifact carries the hash of the config sections it depends on.
Downstream commands compare it with their own config and refuse a mismatch
unless ``--force`` is given.

Exit codes: 0 success, 1 invalid config or missing/mismatched inputs,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

logger = logging.getLogger("deepfaith")

BASELINE_METHODS = ("occlusion", "feature_ablation", "saliency", "integrated_gradients", "lime", "kernel_shap")

DEFAULTS = {
    "seed": 0,
    "out": "runs",
    "threads": None,
    "task.kind": "synth_linear",
    "task.path": None,
    "task.target_column": None,
    "task.n": 8,
    "task.num_samples": 1000,
    "task.test_fraction": 0.2,
    "task.standardize": True,
    "model.arch": "mlp",
    "model.hidden": [16],
    "model.activation": "tanh",
    "model.epochs": 100,
    "model.lr": 0.1,
    "model.momentum": 0.9,
    "model.batch_size": 32,
    "model.weight_decay": 0.0,
    "removal.kind": "baseline_replace",
    "removal.baseline": "train_mean",
    "removal.sigma": 0.1,
    "metrics.delta": "abs_diff",
    "metrics.delta_minus": "confidence_ratio",
    "metrics.tau": "pearson",
    "metrics.mc_tau": "spearman",
    "metrics.flip_rule": "argmax",
    "metrics.flip_threshold": 0.5,
    "metrics.inf_samples": 128,
    "metrics.fe_samples": 128,
    "metrics.fc_budget": None,
    "metrics.mc_sequence": "singletons",
    "explainers.methods": list(BASELINE_METHODS),
    "explainers.feature_ablation.group_size": 2,
    "explainers.integrated_gradients.steps": 64,
    "explainers.lime.num_samples": 256,
    "explainers.lime.kernel_width": 0.25,
    "explainers.lime.ridge": 1e-3,
    "explainers.kernel_shap.num_samples": None,
    "pipeline.dedup_threshold": 0.95,
    "pipeline.p": 0.5,
    "pipeline.global_threshold": False,
    "pipeline.max_samples": None,
    "train.epochs": 100,
    "train.batch_size": 32,
    "train.lr": 0.003,
    "train.momentum": 0.9,
    "train.optimizer": "adam",
    "train.weight_decay": 0.0,
    "train.hidden": 16,
    "train.depth": 1,
    "train.e_mid": None,
    "train.width": None,
    "train.lc_mode": "sampled",
    "train.lc_subsets": 64,
    "train.pc_tau": "pearson",
    "train.loss": "obj",
    "bench.num_test_samples": 100,
    "bench.latency_runs": 50,
    "bench.warmup": 5,
    "bench.include_explainer": True,
    "bench.ablation": False,
}

_KNOWN_EXPLAINERS = set(BASELINE_METHODS) | {"exact_shapley"}


def _int(lo=None, hi=None, optional=False):
    def check(v):
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            return "must be an integer" + (" or null" if optional else "")
        if lo is not None and v < lo:
            return f"must be >= {lo}"
        if hi is not None and v > hi:
            return f"must be <= {hi}"
        return None
    return check


def _real(lo=None, hi=None, lo_open=False, hi_open=False, optional=False):
    def check(v):
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number" + (" or null" if optional else "")
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None
    return check


def _choice(*options, optional=False):
    def check(v):
        if v is None and optional:
            return None
        return None if v in options else f"must be one of {list(options)}"
    return check


def _bool(v):
    return None if isinstance(v, bool) else "must be true or false"


def _str(optional=False):
    def check(v):
        if v is None and optional:
            return None
        return None if isinstance(v, str) and v else "must be a nonempty string"
    return check


def _int_list(v):
    if not isinstance(v, list) or not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in v):
        return "must be a list of positive integers"
    return None


def _methods(v):
    if not isinstance(v, list) or len(v) < 2:
        return "must list at least 2 explainers"
    bad = [m for m in v if m not in _KNOWN_EXPLAINERS]
    if bad:
        return f"unknown explainers {bad}; known: {sorted(_KNOWN_EXPLAINERS)}"
    if len(set(v)) != len(v):
        return "must not repeat an explainer"
    return None


CHECKS = {
    "seed": _int(0),
    "out": _str(),
    "threads": _int(1, optional=True),
    "task.kind": _choice("synth_linear", "csv"),
    "task.path": _str(optional=True),
    "task.target_column": _str(optional=True),
    "task.n": _int(2),
    "task.num_samples": _int(10),
    "task.test_fraction": _real(0, 1, lo_open=True, hi_open=True),
    "task.standardize": _bool,
    "model.arch": _choice("mlp", "linear"),
    "model.hidden": _int_list,
    "model.activation": _choice("tanh", "sigmoid", "relu"),
    "model.epochs": _int(1),
    "model.lr": _real(0, lo_open=True),
    "model.momentum": _real(0, 1, hi_open=True),
    "model.batch_size": _int(1),
    "model.weight_decay": _real(0),
    "removal.kind": _choice("baseline_replace", "mean_replace", "gaussian_noise"),
    "removal.baseline": _choice("train_mean", "zeros"),
    "removal.sigma": _real(0, lo_open=True),
    "metrics.delta": _choice("abs_diff", "half_squared"),
    "metrics.delta_minus": _choice("confidence_ratio", "raw_confidence"),
    "metrics.tau": _choice("pearson", "spearman"),
    "metrics.mc_tau": _choice("pearson", "spearman"),
    "metrics.flip_rule": _choice("argmax", "threshold"),
    "metrics.flip_threshold": _real(0, 1, lo_open=True),
    "metrics.inf_samples": _int(2),
    "metrics.fe_samples": _int(2),
    "metrics.fc_budget": _int(2, optional=True),
    "metrics.mc_sequence": _choice("singletons", "prefixes"),
    "explainers.methods": _methods,
    "explainers.feature_ablation.group_size": _int(1),
    "explainers.integrated_gradients.steps": _int(1),
    "explainers.lime.num_samples": _int(2),
    "explainers.lime.kernel_width": _real(0, lo_open=True),
    "explainers.lime.ridge": _real(0, lo_open=True),
    "explainers.kernel_shap.num_samples": _int(2, optional=True),
    "pipeline.dedup_threshold": _real(0, 1, lo_open=True),
    "pipeline.p": _real(0, 1, lo_open=True, hi_open=True),
    "pipeline.global_threshold": _bool,
    "pipeline.max_samples": _int(1, optional=True),
    "train.epochs": _int(1),
    "train.batch_size": _int(1),
    "train.lr": _real(0, lo_open=True),
    "train.momentum": _real(0, 1, hi_open=True),
    "train.optimizer": _choice("momentum", "adam"),
    "train.weight_decay": _real(0),
    "train.hidden": _int(1),
    "train.depth": _int(0),
    "train.e_mid": _real(optional=True),
    "train.width": _real(0, lo_open=True, optional=True),
    "train.lc_mode": _choice("sampled", "exact"),
    "train.lc_subsets": _int(2),
    "train.pc_tau": _choice("pearson", "cosine"),
    "train.loss": _choice("obj", "pc", "lc"),
    "bench.num_test_samples": _int(2, optional=True),
    "bench.latency_runs": _int(0),
    "bench.warmup": _int(0),
    "bench.include_explainer": _bool,
    "bench.ablation": _bool,
}

# Config sections each artifact depends on; the artifact hash covers exactly these.
STAGE_SECTIONS = {
    "model": ("seed", "task", "model"),
    "signals": ("seed", "task", "model", "removal", "metrics", "explainers", "pipeline"),
    "explainer": ("seed", "task", "model", "removal", "metrics", "explainers", "pipeline", "train"),
    "benchmark": ("seed", "task", "model", "removal", "metrics", "explainers", "pipeline", "train", "bench"),
}

ARTIFACTS = {
    "model": "model.json",
    "signals": "signals.jsonl",
    "explainer": "explainer.json",
}


class ConfigError(Exception):
    """Invalid configuration; carries every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- config handling ----------------------------------------------------------


def parse_value(text: str):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError([f"config file {path} is not valid JSON: {err}"]) from None
    if not isinstance(obj, dict):
        raise ConfigError([f"config file {path} must hold a JSON object of dotted keys"])
    return obj


def validate(cfg: dict) -> list[str]:
    """Every violation in ``cfg``, as ``key: message`` strings."""
    errors = [f"{k}: unknown config key" for k in sorted(set(cfg) - set(DEFAULTS))]
    for key, check in CHECKS.items():
        if key in cfg:
            msg = check(cfg[key])
            if msg:
                errors.append(f"{key}: {msg} (got {cfg[key]!r})")
    if cfg.get("task.kind") == "csv":
        if not cfg.get("task.path"):
            errors.append("task.path: required when task.kind is csv")
        elif not Path(cfg["task.path"]).is_file():
            errors.append(f"task.path: file {cfg['task.path']} does not exist")
        if not cfg.get("task.target_column"):
            errors.append("task.target_column: required when task.kind is csv")
    return errors


def merge_config(file_cfg: dict | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg or {})
    cfg.update(overrides)
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def config_hash(cfg: dict, stage: str) -> str:
    sections = STAGE_SECTIONS[stage]
    sub = {k: v for k, v in cfg.items() if k.split(".", 1)[0] in sections}
    return hashlib.sha256(json.dumps(sub, sort_keys=True).encode()).hexdigest()[:16]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_effective_config(cfg: dict, out: Path, command: str) -> Path:
    path = out / f"config.{command}.json"
    write_json(path, {"command": command, "config": cfg,
                      "hashes": {s: config_hash(cfg, s) for s in STAGE_SECTIONS}})
    return path


# -- builders -------------------------------------------------------------------


def build_dataset(cfg: dict):
    from .data import load_csv, synth_linear

    if cfg["task.kind"] == "csv":
        return load_csv(cfg["task.path"], cfg["task.target_column"], cfg["task.standardize"],
                        cfg["task.test_fraction"], cfg["seed"])
    ds, _ = synth_linear(cfg["task.n"], cfg["task.num_samples"], cfg["seed"], cfg["task.test_fraction"])
    return ds


def build_effect_config(cfg: dict):
    from .metrics import EffectConfig

    return EffectConfig(
        delta_kind=cfg["metrics.delta"], delta_minus_kind=cfg["metrics.delta_minus"],
        tau_kind=cfg["metrics.tau"], mc_tau_kind=cfg["metrics.mc_tau"], flip_rule=cfg["metrics.flip_rule"],
        flip_threshold=cfg["metrics.flip_threshold"], inf_samples=cfg["metrics.inf_samples"],
        fe_samples=cfg["metrics.fe_samples"], fc_budget=cfg["metrics.fc_budget"],
        mc_sequence=cfg["metrics.mc_sequence"])


def build_strategy(cfg: dict, ds):
    import numpy as np

    from .perturb import RemovalStrategy

    base = ds.train_mean() if cfg["removal.baseline"] == "train_mean" else np.zeros((ds.n, ds.d))
    return RemovalStrategy(base, cfg["removal.kind"], cfg["removal.sigma"], cfg["seed"])


def explainer_options(cfg: dict) -> dict:
    out = {}
    for key, value in cfg.items():
        parts = key.split(".")
        if parts[0] == "explainers" and len(parts) == 3:
            out.setdefault(parts[1], {})[parts[2]] = value
    return out


def build_pipeline_config(cfg: dict):
    from .signals import PipelineConfig

    return PipelineConfig(tuple(cfg["explainers.methods"]), cfg["pipeline.dedup_threshold"], cfg["pipeline.p"],
                          cfg["pipeline.global_threshold"], cfg["seed"], explainer_options(cfg))


def build_train_config(cfg: dict):
    from .explainer_net import TrainConfig

    return TrainConfig(
        epochs=cfg["train.epochs"], batch_size=cfg["train.batch_size"], lr=cfg["train.lr"],
        momentum=cfg["train.momentum"], optimizer=cfg["train.optimizer"], weight_decay=cfg["train.weight_decay"],
        hidden=cfg["train.hidden"], depth=cfg["train.depth"], e_mid=cfg["train.e_mid"], width=cfg["train.width"],
        lc_mode=cfg["train.lc_mode"], lc_subsets=cfg["train.lc_subsets"], pc_tau=cfg["train.pc_tau"],
        loss=cfg["train.loss"], seed=cfg["seed"])


def method_options(cfg: dict, method: str, index: int = 0) -> dict:
    import numpy as np

    opts = dict(explainer_options(cfg).get(method, {}))
    if method in ("lime", "kernel_shap"):
        opts["seed"] = int(np.random.SeedSequence([cfg["seed"], index]).generate_state(1)[0])
    return opts


# -- artifact checks ------------------------------------------------------------


def _artifact_hash(path: Path) -> str | None:
    if path.suffix == ".jsonl":
        from .signals import read_signals

        _, hashes = read_signals(path)
        return hashes.pop() if len(hashes) == 1 else None
    return json.loads(path.read_text(encoding="utf-8")).get("config_hash")


def require_artifacts(cfg: dict, out: Path, stages, force: bool) -> dict:
    """Paths of upstream artifacts, checked for presence and matching hashes."""
    paths, errors = {}, []
    for stage in stages:
        path = out / ARTIFACTS[stage]
        if not path.is_file():
            errors.append(f"missing {stage} artifact {path}; run the upstream command first")
            continue
        found, want = _artifact_hash(path), config_hash(cfg, stage)
        if found != want:
            msg = f"{path} was produced under config hash {found}, current config gives {want}"
            if not force:
                errors.append(msg + " (use --force to accept)")
            else:
                logger.warning("%s; continuing because of --force", msg)
        paths[stage] = path
    if errors:
        raise ConfigError(errors)
    return paths


# -- commands -----------------------------------------------------------------


def cmd_train_model(cfg: dict, out: Path, args) -> list[Path]:
    from .models import accuracy, save_model, train_model

    ds = build_dataset(cfg)
    hp = {k.split(".", 1)[1]: cfg[k] for k in ("model.hidden", "model.activation", "model.epochs", "model.lr",
                                               "model.momentum", "model.batch_size", "model.weight_decay")}
    model = train_model(ds, cfg["model.arch"], hp, seed=cfg["seed"])
    acc = accuracy(model, ds.X_test, ds.y_test)
    logger.info("held-out accuracy %.4f", acc)
    path = out / ARTIFACTS["model"]
    save_model(model, path, {"config_hash": config_hash(cfg, "model"), "test_accuracy": acc,
                             "train_loss_final": float(model.history[-1])})
    return [path]


def _instance(cfg: dict, ds, args):
    import numpy as np

    if args.input:
        p = Path(args.input)
        x = np.asarray(json.loads(p.read_text(encoding="utf-8")), dtype=float)
        return x, {"input_file": str(p)}
    X = ds.X_test if args.split == "test" else ds.X_train
    if not 0 <= args.row < len(X):
        raise ConfigError([f"--row: {args.row} is outside the {args.split} split (size {len(X)})"])
    return X[args.row], {"split": args.split, "row": args.row}


def cmd_explain(cfg: dict, out: Path, args) -> list[Path]:
    from .explainer_net import load_explainer
    from .explainers import explain
    from .models import load_model, predicted_target

    stages = ["model", "explainer"] if args.method == "deepfaith" else ["model"]
    paths = require_artifacts(cfg, out, stages, args.force)
    ds = build_dataset(cfg)
    model = load_model(paths["model"])
    x, source = _instance(cfg, ds, args)
    if args.method == "deepfaith":
        expl = load_explainer(paths["explainer"]).explain(x)
    else:
        expl = explain(args.method, x, predicted_target(model, x), build_strategy(cfg, ds),
                       build_effect_config(cfg), **method_options(cfg, args.method, source.get("row", 0)))
    tag = f"{source['split']}{source['row']}" if "row" in source else Path(source["input_file"]).stem
    path = out / f"explanation_{args.method}_{tag}.json"
    write_json(path, {"config_hash": config_hash(cfg, "signals"), "source": source,
                      "instance": x.tolist(), "explanation": expl.to_dict()})
    return [path]


def cmd_evaluate(cfg: dict, out: Path, args) -> list[Path]:
    import numpy as np

    from .explainers import SaliencyExplanation
    from .metrics import evaluate_all
    from .models import load_model, predicted_target

    paths = require_artifacts(cfg, out, ["model"], args.force)
    epath = Path(args.explanation)
    if not epath.is_file():
        raise ConfigError([f"--explanation: file {epath} does not exist"])
    obj = json.loads(epath.read_text(encoding="utf-8"))
    want = config_hash(cfg, "signals")
    if obj.get("config_hash") != want:
        msg = f"{epath} was produced under config hash {obj.get('config_hash')}, current config gives {want}"
        if not args.force:
            raise ConfigError([msg + " (use --force to accept)"])
        logger.warning("%s; continuing because of --force", msg)
    ds = build_dataset(cfg)
    model = load_model(paths["model"])
    x = np.asarray(obj["instance"], dtype=float)
    expl = SaliencyExplanation.from_dict(obj["explanation"])
    report = evaluate_all(expl, x, predicted_target(model, x), build_strategy(cfg, ds), build_effect_config(cfg),
                          seed=cfg["seed"])
    path = out / f"report_{epath.stem.removeprefix('explanation_')}.json"
    write_json(path, {"config_hash": want, "explanation_file": epath.name, **report.to_dict(with_timing=False)})
    write_json(out / f"{path.stem}.timing.json", report.timing)
    return [path]


def cmd_signals(cfg: dict, out: Path, args) -> list[Path]:
    from .models import load_model
    from .signals import run_pipeline, write_signals

    paths = require_artifacts(cfg, out, ["model"], args.force)
    ds = build_dataset(cfg)
    model = load_model(paths["model"])
    X = ds.X_train if cfg["pipeline.max_samples"] is None else ds.X_train[: cfg["pipeline.max_samples"]]
    Z, stats = run_pipeline(X, model, build_strategy(cfg, ds), build_pipeline_config(cfg), build_effect_config(cfg))
    h = config_hash(cfg, "signals")
    path = out / ARTIFACTS["signals"]
    write_signals(Z, path, h)
    spath = out / "signals_stats.json"
    write_json(spath, {"config_hash": h, "num_samples": len(X), "num_pairs": len(Z), **stats})
    logger.info("%d signal pairs from %d samples", len(Z), len(X))
    return [path, spath]


def cmd_train_explainer(cfg: dict, out: Path, args) -> list[Path]:
    from .explainer_net import save_explainer, train_explainer
    from .models import load_model
    from .signals import read_signals

    paths = require_artifacts(cfg, out, ["model", "signals"], args.force)
    ds = build_dataset(cfg)
    model = load_model(paths["model"])
    Z, _ = read_signals(paths["signals"])
    tcfg = build_train_config(cfg)
    net, log = train_explainer(Z, ds.X_train, model, build_strategy(cfg, ds), tcfg, build_effect_config(cfg))
    path = out / ARTIFACTS["explainer"]
    save_explainer(net, path, tcfg, log, {"config_hash": config_hash(cfg, "explainer")})
    lpath = out / "train_log.csv"
    log.write_csv(lpath)
    return [path, lpath]


def cmd_benchmark(cfg: dict, out: Path, args) -> list[Path]:
    from .bench import baseline_method, emit_report, run_ablation, run_benchmark
    from .explainer_net import load_explainer
    from .metrics import METRICS
    from .models import load_model
    from .signals import read_signals

    stages = ["model", "explainer"] if cfg["bench.include_explainer"] else ["model"]
    if cfg["bench.ablation"]:
        stages.append("signals")
    paths = require_artifacts(cfg, out, stages, args.force)
    ds = build_dataset(cfg)
    model = load_model(paths["model"])
    strat = build_strategy(cfg, ds)
    ecfg = build_effect_config(cfg)
    X = ds.X_test if cfg["bench.num_test_samples"] is None else ds.X_test[: cfg["bench.num_test_samples"]]
    methods = {}
    if cfg["bench.include_explainer"]:
        methods["deepfaith"] = load_explainer(paths["explainer"]).explain
    for m in cfg["explainers.methods"]:
        methods[m] = baseline_method(m, model, strat, ecfg, method_options(cfg, m))
    h = config_hash(cfg, "benchmark")
    result = run_benchmark(X, model, methods, strat, ecfg, seed=cfg["seed"], latency_runs=cfg["bench.latency_runs"],
                           warmup=cfg["bench.warmup"], keep_curves=True, config={"config_hash": h})
    written = emit_report(result, out, split_timing=True)
    if cfg["bench.ablation"]:
        Z, _ = read_signals(paths["signals"])
        rows = run_ablation(Z, ds.X_train, X, model, strat, build_train_config(cfg), ecfg, cfg["seed"])
        apath = out / "ablation.json"
        write_json(apath, {"config_hash": h, "metrics": list(METRICS),
                           "rows": {k: r.to_dict(with_timing=False)["scores"] for k, (_, _, r) in rows.items()}})
        written.append(apath)
    for name, row in zip(result.methods, result.scores):
        logger.info("%-22s avg rank %.2f", name, result.average_rank[name])
    return written


COMMANDS = {
    "train-model": cmd_train_model,
    "explain": cmd_explain,
    "evaluate": cmd_evaluate,
    "signals": cmd_signals,
    "train-explainer": cmd_train_explainer,
    "benchmark": cmd_benchmark,
}

# per-command flags and the config keys they override
FLAG_KEYS = {
    "epochs": None,  # resolved per command below
    "p": "pipeline.p",
    "dedup_threshold": "pipeline.dedup_threshold",
    "max_samples": "pipeline.max_samples",
    "loss": "train.loss",
    "num_test_samples": "bench.num_test_samples",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flat dotted config keys")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory (artifacts are read from and written to it)")
    common.add_argument("--threads", type=int, help="BLAS/OpenMP thread cap")
    common.add_argument("--force", action="store_true", help="accept upstream artifacts with a different config hash")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; VALUE is parsed as JSON when possible")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="deepfaith", description="Faithfulness metrics and a trained explainer.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train-model", parents=[common], help="train the predictive model")
    p.add_argument("--epochs", type=int, help="model.epochs")
    p = sub.add_parser("explain", parents=[common], help="explain one instance")
    p.add_argument("--method", required=True, help="explainer tag or 'deepfaith'")
    p.add_argument("--row", type=int, default=0, help="row of the chosen split")
    p.add_argument("--split", choices=("test", "train"), default="test")
    p.add_argument("--input", help="JSON file holding one instance instead of a dataset row")
    p = sub.add_parser("evaluate", parents=[common], help="score an explanation on all ten metrics")
    p.add_argument("--explanation", required=True, help="explanation JSON written by 'explain'")
    p = sub.add_parser("signals", parents=[common], help="build the supervised signal set")
    p.add_argument("--p", type=float, help="pipeline.p")
    p.add_argument("--dedup-threshold", type=float, help="pipeline.dedup_threshold")
    p.add_argument("--max-samples", type=int, help="pipeline.max_samples")
    p = sub.add_parser("train-explainer", parents=[common], help="train the explainer network")
    p.add_argument("--epochs", type=int, help="train.epochs")
    p.add_argument("--loss", choices=("obj", "pc", "lc"), help="train.loss")
    p = sub.add_parser("benchmark", parents=[common], help="rank the explainers on all ten metrics")
    p.add_argument("--num-test-samples", type=int, help="bench.num_test_samples")
    p.add_argument("--ablation", action="store_true", help="also train and score the three loss settings")
    return parser


def overrides_from_args(args) -> dict:
    out, errors = {}, []
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            errors.append(f"--set {item!r}: expected KEY=VALUE")
            continue
        out[key.strip()] = parse_value(value)
    for name in ("seed", "out", "threads"):
        if getattr(args, name, None) is not None:
            out[name] = getattr(args, name)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if attr == "epochs":
            key = "model.epochs" if args.command == "train-model" else "train.epochs"
        out[key] = value
    if getattr(args, "ablation", False):
        out["bench.ablation"] = True
    if errors:
        raise ConfigError(errors)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_cfg = load_config_file(args.config) if args.config else None
        cfg = merge_config(file_cfg, overrides_from_args(args))
        if cfg["threads"]:
            # only effective when the numeric libraries have not been loaded yet
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(cfg["threads"])
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        write_effective_config(cfg, out, args.command)
        written = COMMANDS[args.command](cfg, out, args)
    except ConfigError as err:
        print("configuration error:", file=sys.stderr)
        for e in err.errors:
            print(f"  - {e}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - any runtime failure maps to exit code 2
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
