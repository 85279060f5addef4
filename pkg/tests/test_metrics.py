import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepfaith.core_math import argsort_desc
from deepfaith.metrics import (
    LOWER_IS_BETTER,
    METRICS,
    EffectConfig,
    MetricReport,
    curve_metric,
    delta,
    delta_minus,
    evaluate_all,
    fc,
    fe,
    inf,
    irof,
    mc,
    removal_curve,
    rp,
)
from deepfaith.models import AdditiveModel, ConstantModel, TargetedModel
from deepfaith.perturb import RemovalStrategy

from conftest import additive_task, one_based

HALF_SQ = EffectConfig(delta_kind="half_squared")
RAW = EffectConfig(delta_minus_kind="raw_confidence")


def test_delta_examples():
    assert delta(0.9, 0.9) == 0.0
    assert delta(0.9, 0.5) == pytest.approx(0.4)
    assert delta(1.0, 0.0, HALF_SQ) == 0.5
    with pytest.raises(ValueError):
        delta(1.2, 0.3)


def test_delta_minus_examples():
    assert delta_minus(0.7, 0.7) == 1.0
    assert delta_minus(0.9, 0.45) == pytest.approx(0.5)
    assert delta_minus(0.9, 0.3, RAW) == 0.3
    assert delta_minus(0.4, 0.8) == 1.0
    assert delta_minus(0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        delta_minus(0.5, -0.1)


def two_feature_task():
    model = AdditiveModel(0.5, [0.1, 0.3])
    return TargetedModel(model, 1), np.ones((2, 1)), RemovalStrategy.zeros(2)


def test_fc_two_feature_example():
    tm, x, strat = two_feature_task()
    assert fc([0.25, 0.75], x, tm, strat) == pytest.approx(1.0, abs=1e-12)


def test_fc_constant_model_is_zero():
    tm = TargetedModel(ConstantModel([0.4, 0.6], (4, 1)), 1)
    assert fc([0.1, 0.2, 0.3, 0.4], np.ones((4, 1)), tm, RemovalStrategy.zeros(4)) == 0.0


def test_sampled_fc_close_to_exact():
    _, tm, x, c, strat = additive_task(8, seed=2)
    s = np.random.default_rng(0).random(8)
    exact = fc(s, x, tm, strat)
    sampled = [fc(s, x, tm, strat, subset_budget=256, seed=k) for k in range(10)]
    assert abs(np.mean(sampled) - exact) < 0.05


def test_sampled_fc_with_full_unique_budget_equals_exact():
    _, tm, x, c, strat = additive_task(6, seed=5)
    s = np.random.default_rng(1).random(6)
    assert fc(s, x, tm, strat, subset_budget=64, seed=3, unique=True) == pytest.approx(fc(s, x, tm, strat), abs=1e-9)


def test_fe_empty_sets_give_zero():
    model, tm, x, c, strat = additive_task(4, seed=0)
    pairs = [(x, []) for _ in range(5)]
    assert fe(lambda z: np.full(4, 0.5), pairs, tm, strat) == 0.0


def test_fe_proportional_to_contributions():
    rng = np.random.default_rng(3)
    c = rng.uniform(0.01, 0.05, size=6)
    model = AdditiveModel(0.5, c)
    pairs = []
    for _ in range(40):
        I = np.flatnonzero(rng.random(6) < 0.5)
        if I.size == 0:
            I = np.array([0])
        pairs.append((rng.uniform(0, 1, size=(6, 1)), I))
    score = fe(lambda z: c * z[:, 0], pairs, TargetedModel(model, 1), RemovalStrategy.zeros(6))
    assert score == pytest.approx(1.0, abs=1e-9)


def test_fe_needs_two_pairs():
    tm, x, strat = two_feature_task()
    with pytest.raises(ValueError):
        fe(lambda z: [0.5, 0.5], [(x, [0])], tm, strat)


def test_inf_full_unique_budget_is_one():
    _, tm, x, c, strat = additive_task(6, seed=1)
    s = c * x[:, 0]
    assert inf(s, x, tm, strat, N=64, unique=True) == pytest.approx(1.0, abs=1e-9)


def test_inf_constant_model_and_determinism():
    tm = TargetedModel(ConstantModel([0.2, 0.8], (5, 1)), 1)
    x, strat = np.ones((5, 1)), RemovalStrategy.zeros(5)
    assert inf(np.arange(5.0), x, tm, strat) == 0.0
    _, tm, x, c, strat = additive_task(5, seed=4)
    s = np.random.default_rng(2).random(5)
    assert inf(s, x, tm, strat, seed=11) == inf(s, x, tm, strat, seed=11)
    with pytest.raises(ValueError):
        inf(s, x, tm, strat, N=1)


def test_mc_faithful_and_reversed():
    _, tm, x, c, strat = additive_task(6, seed=7)
    w = c * x[:, 0]
    assert mc(w, x, tm, strat) == pytest.approx(1.0)
    assert mc(-w, x, tm, strat) == pytest.approx(-1.0)
    assert mc(w, x, tm, strat, sequence_mode="prefixes") == pytest.approx(1.0)


def test_mc_equal_contributions_is_bounded():
    tm = TargetedModel(AdditiveModel(0.5, [0.2, 0.2]), 1)
    v = mc([0.3, 0.9], np.ones((2, 1)), tm, RemovalStrategy.zeros(2))
    assert np.isfinite(v) and abs(v) <= 1


def test_deletion_worked_example():
    tm, x, strat = two_feature_task()
    got = curve_metric(one_based([2, 1]), x, tm, strat, mode="DEL")
    assert got == pytest.approx((0.6 / 0.9 + 0.5 / 0.9) / 2, abs=1e-12)


def test_full_insertion_restores_prediction():
    _, tm, x, c, strat = additive_task(5, seed=3)
    curve = removal_curve(np.arange(5), x, tm, strat, mode="INS")
    assert curve["preservation"][-1] == pytest.approx(1.0)


def test_neg_never_flipping_averages_all_steps():
    _, tm, x, c, strat = additive_task(5, seed=3)
    assert removal_curve(np.arange(5), x, tm, strat, mode="NEG")["t"] == 5


def test_pos_stops_at_first_flip():
    # class 1 starts at 0.7; removing element 0 drops it to 0.3 and flips the argmax
    tm = TargetedModel(AdditiveModel(0.2, [0.4, 0.1]), 1)
    x, strat = np.ones((2, 1)), RemovalStrategy.zeros(2)
    c = removal_curve([0, 1], x, tm, strat, mode="POS")
    assert c["t"] == 1
    assert curve_metric([0, 1], x, tm, strat, mode="POS") == pytest.approx(0.3 / 0.7)
    neg = removal_curve([0, 1], x, tm, strat, mode="NEG")
    assert neg["t"] == 2


def test_threshold_flip_rule():
    tm = TargetedModel(AdditiveModel(0.2, [0.4, 0.1]), 1)
    cfg = EffectConfig(flip_rule="threshold", flip_threshold=0.45)
    c = removal_curve([1, 0], np.ones((2, 1)), tm, RemovalStrategy.zeros(2), cfg, mode="POS")
    assert c["t"] == 2


def test_curve_errors():
    tm, x, strat = two_feature_task()
    with pytest.raises(ValueError):
        curve_metric([0, 1], x, tm, strat, mode="AUC")
    with pytest.raises(ValueError):
        curve_metric([0, 0], x, tm, strat)


def test_rp_constant_model_and_single_element():
    tm = TargetedModel(ConstantModel([0.3, 0.7], (3, 1)), 1)
    assert rp([np.arange(3)], np.ones((1, 3, 1)), tm, RemovalStrategy.zeros(3)) == 0.0
    one = TargetedModel(AdditiveModel(0.5, [0.3]), 1)
    assert rp([np.array([0])], np.ones((1, 1, 1)), one, RemovalStrategy.zeros(1)) == pytest.approx(0.3 / 2)


def test_irof_zero_when_prediction_preserved():
    tm = TargetedModel(ConstantModel([0.3, 0.7], (3, 1)), 1)
    assert irof([np.arange(3)], np.ones((1, 3, 1)), tm, RemovalStrategy.zeros(3)) == 0.0


def test_irof_bounds_on_random_explanations():
    _, tm, x, c, strat = additive_task(6, seed=8)
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = irof([rng.permutation(6)], x[None], tm, strat)
        assert 0.0 <= v <= 1.0


def brute_force(n, seed, fn):
    _, tm, x, c, strat = additive_task(n, seed)
    vals = {p: fn(np.array(p), x, tm, strat) for p in itertools.permutations(range(n))}
    return vals, argsort_desc(c * x[:, 0])


@pytest.mark.parametrize("seed", range(3))
def test_contribution_order_maximizes_rp_and_irof(seed):
    for fn in (lambda p, x, tm, s: rp([p], x[None], tm, s), lambda p, x, tm, s: irof([p], x[None], tm, s)):
        vals, best = brute_force(5, seed, fn)
        assert vals[tuple(best)] >= max(vals.values()) - 1e-12


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("mode", ["DEL", "INS", "NEG", "POS"])
def test_contribution_order_is_optimal_for_curves(seed, mode):
    vals, best = brute_force(5, seed, lambda p, x, tm, s: curve_metric(p, x, tm, s, mode=mode))
    target = min(vals.values()) if mode in LOWER_IS_BETTER else max(vals.values())
    assert vals[tuple(best)] == pytest.approx(target, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_proportional_saliency_attains_perfect_correlations(seed):
    model, tm, x, c, strat = additive_task(5, seed)
    w = c * x[:, 0]
    assert fc(w, x, tm, strat) == pytest.approx(1.0, abs=1e-9)
    assert inf(w, x, tm, strat, N=200, seed=seed) == pytest.approx(1.0, abs=1e-9)
    assert mc(w, x, tm, strat, EffectConfig(mc_tau_kind="pearson")) == pytest.approx(1.0, abs=1e-9)
    rng = np.random.default_rng(seed)
    pairs = [(x * rng.uniform(0.5, 1.0, size=x.shape), np.flatnonzero(rng.random(5) < 0.5) if k else [0])
             for k in range(30)]
    assert fe(lambda z: c * z[:, 0], pairs, tm, strat) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["cube", "exp", "affine"]))
def test_monotone_transform_leaves_rank_metrics_unchanged(seed, kind):
    _, tm, x, c, strat = additive_task(5, seed % 50)
    s = np.random.default_rng(seed).random(5)
    g = {"cube": lambda v: v ** 3, "exp": np.exp, "affine": lambda v: 3 * v + 1}[kind](s)
    a = evaluate_all(s, x, tm, strat, EffectConfig(tau_kind="spearman"), seed=1)
    b = evaluate_all(g, x, tm, strat, EffectConfig(tau_kind="spearman"), seed=1)
    for m in ("DEL", "INS", "NEG", "POS", "RP", "IROF", "MC"):
        assert a.scores[m] == pytest.approx(b.scores[m], abs=1e-12)


def test_spearman_fc_over_subsets_is_not_transform_invariant():
    # subset sums of g(s) can reorder relative to sums of s, so only the
    # singleton family (MC) keeps the rank correlation fixed
    _, tm, x, c, strat = additive_task(5, 0)
    s = np.random.default_rng(0).random(5)
    cfg = EffectConfig(tau_kind="spearman")
    assert fc(s, x, tm, strat, cfg) != pytest.approx(fc(s ** 3, x, tm, strat, cfg), abs=1e-3)


def test_report_has_ten_scores_and_directions():
    _, tm, x, c, strat = additive_task(6, seed=0)
    r = evaluate_all(np.random.default_rng(0).random(6), x, tm, strat, seed=3)
    assert list(r.scores) == list(METRICS)
    assert r.directions["DEL"] == r.directions["POS"] == "lower"
    assert all(r.directions[m] == "higher" for m in METRICS if m not in ("DEL", "POS"))
    for m in ("FC", "FE", "INF", "MC"):
        assert -1.0 <= r.scores[m] <= 1.0
    for m in ("DEL", "INS", "NEG", "POS", "RP", "IROF"):
        assert 0.0 <= r.scores[m] <= 1.0
    assert set(r.timing) == set(METRICS)


def test_report_is_reproducible_and_serializes():
    _, tm, x, c, strat = additive_task(6, seed=0)
    s = np.random.default_rng(4).random(6)
    a, b = evaluate_all(s, x, tm, strat, seed=3), evaluate_all(s, x, tm, strat, seed=3)
    assert a.scores == b.scores
    back = MetricReport.from_dict(a.to_dict())
    assert back.scores == a.scores
    assert "timing" not in a.to_dict(with_timing=False)
    with pytest.raises(ValueError):
        MetricReport.from_dict({"schema_version": 99})


def test_faithful_saliency_beats_random_competitors_on_deletion():
    _, tm, x, c, strat = additive_task(7, seed=6)
    w = c * x[:, 0]
    r = evaluate_all(w, x, tm, strat)
    assert r.scores["FC"] == pytest.approx(1.0, abs=1e-9)
    assert r.scores["MC"] == pytest.approx(1.0, abs=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert r.scores["DEL"] <= evaluate_all(rng.random(7), x, tm, strat).scores["DEL"] + 1e-12


def test_effect_config_validation():
    for kw in ({"delta_kind": "l1"}, {"delta_minus_kind": "x"}, {"tau_kind": "kendall"},
               {"flip_rule": "maybe"}, {"mc_sequence": "pairs"}):
        with pytest.raises(ValueError):
            EffectConfig(**kw)
