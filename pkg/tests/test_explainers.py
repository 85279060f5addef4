import numpy as np
import pytest

from deepfaith.core_math import argsort_desc
from deepfaith.explainers import (
    EXPLAINERS,
    SaliencyExplanation,
    exact_shapley,
    explain,
    feature_ablation,
    integrated_gradients,
    kernel_shap,
    lime,
    occlusion,
    saliency_grad,
)
from deepfaith.models import ConstantModel, LinearSoftmax, MlpModel, TargetedModel, finite_difference_gradient
from deepfaith.perturb import RemovalStrategy

from conftest import additive_task


def const_task(n=4):
    return TargetedModel(ConstantModel([0.3, 0.7], (n, 1)), 1), np.ones((n, 1)), RemovalStrategy.zeros(n)


def test_occlusion_constant_model_and_single_element():
    tm, x, strat = const_task()
    np.testing.assert_array_equal(occlusion(x, tm, strat).scores, 0.5)
    tm1, x1, s1 = const_task(1)
    np.testing.assert_array_equal(occlusion(x1, tm1, s1).scores, [0.5])


def test_occlusion_orders_by_contribution():
    _, tm, x, c, strat = additive_task(6, seed=1)
    e = occlusion(x, tm, strat)
    np.testing.assert_array_equal(argsort_desc(e.scores), argsort_desc(c * x[:, 0]))
    np.testing.assert_allclose(e.raw, c * x[:, 0], atol=1e-12)


def test_feature_ablation_singletons_match_occlusion():
    _, tm, x, c, strat = additive_task(5, seed=2)
    np.testing.assert_array_equal(feature_ablation(x, tm, strat).scores, occlusion(x, tm, strat).scores)


def test_feature_ablation_one_group_is_uniform():
    _, tm, x, c, strat = additive_task(5, seed=2)
    e = feature_ablation(x, tm, strat, groups=[range(5)])
    assert np.ptp(e.scores) == 0.0


def test_feature_ablation_two_groups():
    _, tm, x, c, strat = additive_task(6, seed=3)
    groups = [[0, 2, 4], [1, 3, 5]]
    e = feature_ablation(x, tm, strat, groups=groups)
    w = c * x[:, 0]
    np.testing.assert_allclose(e.raw[[0, 1]], [w[groups[0]].sum(), w[groups[1]].sum()], atol=1e-12)
    assert (e.scores[0] > e.scores[1]) == (w[groups[0]].sum() > w[groups[1]].sum())


def test_feature_ablation_rejects_non_partition():
    _, tm, x, c, strat = additive_task(4, seed=0)
    for groups in ([[0, 1], [1, 2, 3]], [[0, 1]], [[0, 1, 2, 3], []]):
        with pytest.raises(ValueError):
            feature_ablation(x, tm, strat, groups=groups)


def test_saliency_constant_model():
    tm, x, _ = const_task()
    np.testing.assert_array_equal(saliency_grad(x, tm).scores, 0.5)


def test_saliency_linear_softmax_ordering():
    rng = np.random.default_rng(4)
    W = rng.normal(size=(2, 6))
    m = LinearSoftmax(W, np.zeros(2), (6, 1))
    e = saliency_grad(rng.normal(size=(6, 1)), TargetedModel(m, 0))
    np.testing.assert_array_equal(argsort_desc(e.scores), argsort_desc(np.abs(W[0] - W[1])))


def test_saliency_finite_difference_path_agrees():
    m = MlpModel.init((6, 1), [10], 2, seed=3)
    x = np.random.default_rng(0).normal(size=(6, 1))
    tm = TargetedModel(m, 1)
    fd = np.linalg.norm(finite_difference_gradient(tm, x), axis=1)
    np.testing.assert_array_equal(argsort_desc(saliency_grad(x, tm).scores), argsort_desc(fd))


def test_ig_at_baseline_is_uniform():
    m = MlpModel.init((4, 1), [5], 2, seed=0)
    x = np.random.default_rng(0).normal(size=(4, 1))
    np.testing.assert_array_equal(integrated_gradients(x, TargetedModel(m, 1), x).scores, 0.5)


def test_ig_completeness_on_smooth_mlp():
    m = MlpModel.init((5, 1), [8], 2, activation="tanh", seed=1)
    rng = np.random.default_rng(1)
    x, base = rng.normal(size=(5, 1)), np.zeros((5, 1))
    tm = TargetedModel(m, 1)
    e = integrated_gradients(x, tm, base, steps=256)
    assert abs(e.raw.sum() - (tm.f(x) - tm.f(base))) < 1e-3


def test_ig_on_additive_model_is_exact_for_any_steps():
    _, tm, x, c, strat = additive_task(5, seed=6)
    for steps in (1, 3, 64):
        np.testing.assert_allclose(integrated_gradients(x, tm, strat.baseline, steps).raw, c * x[:, 0], atol=1e-12)
    with pytest.raises(ValueError):
        integrated_gradients(x, tm, strat.baseline, 0)


def test_lime_is_seeded():
    _, tm, x, c, strat = additive_task(6, seed=0)
    np.testing.assert_array_equal(lime(x, tm, strat, seed=5).scores, lime(x, tm, strat, seed=5).scores)
    with pytest.raises(ValueError):
        lime(x, tm, strat, num_samples=7)


def test_lime_recovers_additive_order():
    hits = 0
    for seed in range(100):
        _, tm, x, c, strat = additive_task(5, seed=seed)
        e = lime(x, tm, strat, num_samples=1024, seed=seed)
        hits += np.array_equal(argsort_desc(e.scores), argsort_desc(c * x[:, 0]))
    assert hits >= 95


def test_lime_degenerate_masks_do_not_crash():
    _, tm, x, c, strat = additive_task(4, seed=0)
    e = lime(x, tm, strat, masks=np.ones((10, 4), dtype=bool), ridge=0.0)
    assert np.all(np.isfinite(e.scores))
    assert e.config["singular_retries"] >= 1


@pytest.mark.parametrize("seed", range(4))
def test_kernel_shap_matches_exact_shapley(seed):
    m = MlpModel.init((7, 1), [6], 3, seed=seed)
    rng = np.random.default_rng(seed)
    x, strat = rng.normal(size=(7, 1)), RemovalStrategy(rng.normal(size=(7, 1)))
    tm = TargetedModel(m, seed % 3)
    ks = kernel_shap(x, tm, strat)
    np.testing.assert_allclose(ks.raw, exact_shapley(x, tm, strat), atol=1e-6)
    full = tm.f(x) - tm.f(strat.baseline)
    assert abs(ks.raw.sum() - full) < 1e-6


def test_kernel_shap_symmetry():
    tm = TargetedModel(LinearSoftmax(np.array([[1.0, 1.0, -0.5], [0.0, 0.0, 0.0]]), np.zeros(2), (3, 1)), 0)
    x = np.array([[0.7], [0.7], [0.2]])
    raw = kernel_shap(x, tm, RemovalStrategy.zeros(3)).raw
    assert raw[0] == pytest.approx(raw[1], abs=1e-12)
    with pytest.raises(ValueError):
        kernel_shap(np.ones((1, 1)), tm, RemovalStrategy.zeros(1))


def test_kernel_shap_sampled_mode_is_close():
    _, tm, x, c, strat = additive_task(6, seed=9)
    ks = kernel_shap(x, tm, strat, num_samples=4000, seed=1)
    assert ks.config["mode"] == "sampled"
    np.testing.assert_allclose(ks.raw, c * x[:, 0], atol=1e-9)


def test_exact_shapley_axioms():
    model, tm, x, c, strat = additive_task(6, seed=4)
    np.testing.assert_allclose(exact_shapley(x, tm, strat), c * x[:, 0], atol=1e-12)
    c0 = c.copy()
    c0[2] = 0.0
    tm0 = TargetedModel(type(model)(0.5, c0), 1)
    phi = exact_shapley(x, tm0, strat)
    assert abs(phi[2]) <= 1e-12
    assert phi.sum() == pytest.approx(tm0.f(x) - tm0.f(strat.baseline), abs=1e-12)
    with pytest.raises(ValueError):
        exact_shapley(np.zeros((13, 1)), TargetedModel(ConstantModel([0.5, 0.5], (13, 1)), 0),
                      RemovalStrategy.zeros(13))


@pytest.mark.parametrize("seed", range(3))
def test_gradient_and_removal_methods_agree_on_additive_models(seed):
    _, tm, x, c, strat = additive_task(6, seed=seed)
    want = argsort_desc(c * x[:, 0])
    for name in ("occlusion", "integrated_gradients", "exact_shapley"):
        np.testing.assert_array_equal(argsort_desc(explain(name, x, tm, strat).scores), want)
    # saliency sees |c_i|, which orders like c*x only when x is constant
    ones = np.ones_like(x)
    np.testing.assert_array_equal(argsort_desc(explain("saliency", ones, tm, strat).scores), argsort_desc(c))


@pytest.mark.parametrize("name", sorted(EXPLAINERS))
def test_every_explainer_is_bounded_and_deterministic(name):
    m = MlpModel.init((6, 2), [7], 2, seed=2)
    rng = np.random.default_rng(2)
    x, strat = rng.normal(size=(6, 2)), RemovalStrategy(np.zeros((6, 2)))
    tm = TargetedModel(m, 0)
    a, b = explain(name, x, tm, strat, seed=3), explain(name, x, tm, strat, seed=3)
    assert a.scores.shape == (6,)
    assert np.all(np.isfinite(a.scores)) and a.scores.min() >= 0 and a.scores.max() <= 1
    np.testing.assert_array_equal(a.scores, b.scores)


def test_unknown_explainer():
    tm, x, strat = const_task()
    with pytest.raises(ValueError, match="unknown explainer"):
        explain("gradcam", x, tm, strat)


def test_explanation_json_round_trip():
    e = SaliencyExplanation(np.array([0.0, 0.4, 1.0]), "lime", np.array([-1.0, 0.2, 3.0]), {"k": 1}, 7)
    back = SaliencyExplanation.from_dict(e.to_dict())
    np.testing.assert_array_equal(back.scores, e.scores)
    np.testing.assert_array_equal(back.raw, e.raw)
    assert (back.method, back.seed, back.config) == ("lime", 7, {"k": 1})
    with pytest.raises(ValueError):
        SaliencyExplanation(np.array([0.2, 1.5]), "x")
