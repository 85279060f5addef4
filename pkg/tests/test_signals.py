import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepfaith.explainers import SaliencyExplanation
from deepfaith.metrics import METRICS
from deepfaith.signals import (
    EvaluatedExplanation,
    PipelineConfig,
    build_pairs,
    dedup,
    filter_explanations,
    generate_signals,
    global_thresholds,
    read_signals,
    run_pipeline,
    write_signals,
)

from conftest import additive_task


def evaluated(scores, name="m", vec=None):
    vec = np.full(3, 0.5) if vec is None else vec
    if not isinstance(scores, dict):
        scores = dict(zip(METRICS, scores))
    return EvaluatedExplanation(SaliencyExplanation(vec, name), scores)


def table_row(higher, lower):
    return {m: (lower if m in ("DEL", "POS") else higher) for m in METRICS}


def test_dedup_two_identical_one_orthogonal():
    kept, k = dedup([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], 0.95)
    assert k == 2
    np.testing.assert_array_equal(kept[1], [0.0, 1.0])


def test_dedup_threshold_bounds():
    rng = np.random.default_rng(0)
    V = [rng.random(5) for _ in range(5)]
    assert dedup(V, 1.0)[1] == 5
    assert dedup(V, 0.0)[1] == 1
    with pytest.raises(ValueError):
        dedup([], 0.5)


def test_dedup_zero_vectors():
    assert dedup([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], 0.9)[1] == 2


def test_dedup_keeps_first_of_group():
    a, b = [1.0, 0.01], [1.0, 0.0]
    kept, _ = dedup([a, b], 0.95)
    assert kept == [a]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3), min_size=1, max_size=3),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_raising_threshold_never_lowers_group_count_up_to_three(vectors, t1, t2):
    lo, hi = sorted((t1, t2))
    assert dedup(vectors, lo)[1] <= dedup(vectors, hi)[1]


def test_raising_threshold_can_lower_group_count_with_four():
    # greedy grouping in list order is not monotone in the threshold: at the
    # higher threshold b stays a head and absorbs both c and d
    def unit(deg_y, deg_z):
        y, z = np.radians(deg_y), np.radians(deg_z)
        return np.array([np.cos(y) * np.cos(z), np.sin(y), np.cos(y) * np.sin(z)])

    a, b, c, d = unit(0, 25), unit(0, 0), unit(18, 0), unit(-18, 0)
    assert dedup([a, b, c, d], 0.90)[1] == 3
    assert dedup([a, b, c, d], 0.95)[1] == 2


def test_filter_single_explanation_is_kept():
    e = evaluated(np.random.default_rng(0).random(10))
    assert filter_explanations([e], 0.5) == ([e], 1)


def test_filter_dominator_wins():
    good, bad = evaluated(table_row(0.9, 0.1), "good"), evaluated(table_row(0.2, 0.8), "bad")
    kept, k = filter_explanations([bad, good], 0.5)
    assert k == 1 and kept[0].method == "good"


def test_filter_hand_table():
    # higher-better medians sit between B and C; DEL median 0.25, POS median 0.35
    rows = {
        "A": table_row(4.0, 0.0) | {"DEL": 0.1, "POS": 0.3},
        "B": table_row(3.0, 0.0) | {"DEL": 0.2, "POS": 0.2},
        "C": table_row(2.0, 0.0) | {"DEL": 0.3, "POS": 0.4},
        "D": table_row(1.0, 0.0) | {"DEL": 0.4, "POS": 0.5},
    }
    rows["B"]["IROF"] = 1.5
    rows["A"]["INS"] = 2.6
    kept, k = filter_explanations([evaluated(v, name) for name, v in rows.items()], 0.5)
    # INS median is (2.6 + 2.0) / 2 = 2.3; IROF median is (2.0 + 1.5) / 2 = 1.75
    assert [e.method for e in kept] == ["A"] and k == 1


def test_filter_hand_table_p_quarter():
    rows = [table_row(v, 1.0 - v / 4) for v in (4.0, 3.0, 2.0, 1.0)]
    kept, k = filter_explanations([evaluated(r, str(i)) for i, r in enumerate(rows)], 0.25)
    # 0.25-quantile of (1,2,3,4) is 1.75, 0.75-quantile of lower-better 0..0.75 is 0.5625
    assert [e.method for e in kept] == ["0", "1", "2"] and k == 3


def test_filter_fallback_keeps_best_ranked():
    rows = [table_row(0.0, 0.0) | {"FC": 1.0}, table_row(1.0, 0.0) | {"FC": 0.0}]
    kept, k = filter_explanations([evaluated(r, str(i)) for i, r in enumerate(rows)], 0.9)
    assert k == 1 and kept[0].method == "1"


def test_global_thresholds_pool_samples():
    a = [evaluated(table_row(1.0, 0.0)), evaluated(table_row(3.0, 0.0))]
    b = [evaluated(table_row(5.0, 0.0))]
    thr = global_thresholds([a, b], 0.5)
    assert thr[METRICS.index("FC")] == 3.0


def test_build_pairs_replicates_instances():
    X = np.arange(9.0).reshape(3, 3, 1)
    kept = [[evaluated(np.zeros(10))] * 2, [evaluated(np.zeros(10))], [evaluated(np.zeros(10))] * 3]
    Z = build_pairs(X, kept)
    assert len(Z) == 6
    assert [p.sample_index for p in Z] == [0, 0, 1, 2, 2, 2]
    np.testing.assert_array_equal(Z[3].instance, X[2])


@pytest.fixture(scope="module")
def small_pipeline(linear_task):
    ds, _, model, strat = linear_task
    X = ds.X_train[:10]
    cfg = PipelineConfig(methods=("occlusion", "integrated_gradients", "lime"), seed=1)
    return X, model, strat, cfg


def test_generate_signals_counts(small_pipeline):
    X, model, strat, cfg = small_pipeline
    rows = generate_signals(X, model, strat, cfg)
    assert sum(len(r) for r in rows) == 30
    assert all(set(e.scores) == set(METRICS) for r in rows for e in r)


def test_pipeline_invariants_and_artifact(small_pipeline, tmp_path):
    X, model, strat, cfg = small_pipeline
    Z, stats = run_pipeline(X, model, strat, cfg)
    for k, kd, kf in zip(stats["K"], stats["K_dedup"], stats["K_filter"]):
        assert 1 <= kf <= kd <= k
    assert len(Z) == sum(stats["K_filter"])
    assert all(p.saliency.scores.min() >= 0 and p.saliency.scores.max() <= 1 for p in Z)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_signals(Z, p1, "h1")
    write_signals(run_pipeline(X, model, strat, cfg)[0], p2, "h1")
    assert p1.read_bytes() == p2.read_bytes()
    back, hashes = read_signals(p1)
    assert hashes == {"h1"} and len(back) == len(Z)
    np.testing.assert_array_equal(back[0].saliency.scores, Z[0].saliency.scores)


def test_shuffling_samples_only_reorders_pairs(small_pipeline):
    X, model, strat, cfg = small_pipeline
    # lime seeds derive from the sample position, so compare seed-free methods
    cfg = PipelineConfig(methods=("occlusion", "integrated_gradients", "saliency"))
    perm = np.random.default_rng(0).permutation(len(X))
    Z1, _ = run_pipeline(X, model, strat, cfg)
    Z2, _ = run_pipeline(X[perm], model, strat, cfg)
    key = lambda p: (tuple(p.instance.ravel()), p.source_method, tuple(p.saliency.scores))
    assert sorted(map(key, Z1)) == sorted(map(key, Z2))


def test_failing_explainer_is_dropped(monkeypatch):
    from deepfaith import explainers

    def broken(x, tm, strat, cfg, **kw):
        raise ValueError("boom")

    monkeypatch.setitem(explainers.EXPLAINERS, "broken", broken)
    model, tm, x, c, strat = additive_task(4, seed=0)
    cfg = PipelineConfig(methods=("occlusion", "broken"))
    rows = generate_signals(x[None], model, strat, cfg)
    assert [e.method for e in rows[0]] == ["occlusion"]


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(p=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(dedup_threshold=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(methods=("occlusion",))
