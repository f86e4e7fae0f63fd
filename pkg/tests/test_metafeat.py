import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amafed.metafeat import (
    MetaFeatures,
    PerfMetrics,
    evaluate_client,
    extract_meta_features,
    perf_from_predictions,
    rare_classes,
    score_data,
    score_perf,
)
from amafed.metrics import classification_metrics, confusion
from amafed.model import Architecture, ModelParams, init_params, predict
from conftest import make_table


def test_single_class_entropy_zero():
    x = extract_meta_features(make_table([1, 1, 1], n_classes=3), [10, 10, 10])
    assert x.class_entropy == 0.0
    assert x.malicious_ratio == 1.0


def test_uniform_client_entropy_one():
    x = extract_meta_features(make_table([0, 1, 2, 3] * 5), [5, 5, 5, 5])
    assert x.class_entropy == pytest.approx(1.0, abs=1e-12)


def test_entropy_hand_value():
    x = extract_meta_features(make_table([0] * 75 + [1] * 25), [75, 25])
    h = -(0.75 * np.log2(0.75) + 0.25 * np.log2(0.25))
    assert x.class_entropy == pytest.approx(h, abs=1e-12)
    assert round(x.class_entropy, 4) == 0.8113
    assert x.malicious_ratio == pytest.approx(0.25)


def test_rare_threshold_and_coverage():
    # Global shares 0.7, 0.25, 0.05 with C=3: only class 2 is below 1/6.
    glob = [700, 250, 50]
    assert rare_classes(glob).tolist() == [False, False, True]
    with_rare = extract_meta_features(make_table([0, 2, 2], n_classes=3), glob)
    without = extract_meta_features(make_table([0, 1, 1], n_classes=3), glob)
    assert with_rare.rare_class_coverage == 1.0
    assert without.rare_class_coverage == 0.0


def test_coverage_without_rare_classes_is_zero():
    x = extract_meta_features(make_table([0, 1]), [50, 50])
    assert x.rare_class_coverage == 0.0


def test_histogram_and_errors():
    table = make_table([0, 2, 2, 1, 2], n_classes=3)
    x = extract_meta_features(table, [5, 5, 5])
    assert sum(x.class_histogram) == len(table)
    assert x.to_dict()["class_histogram"] == [1, 1, 3]
    with pytest.raises(ValueError):
        extract_meta_features(table.subset([]), [5, 5, 5])
    with pytest.raises(ValueError):
        extract_meta_features(table, [5, 5])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=40), st.integers(0, 1000))
def test_meta_features_ranges_and_order_invariance(labels, seed):
    table = make_table(labels, n_classes=4)
    glob = np.array([40, 30, 20, 2])
    x = extract_meta_features(table, glob)
    for v in (x.malicious_ratio, x.class_entropy, x.rare_class_coverage):
        assert 0.0 <= v <= 1.0
    perm = np.random.default_rng(seed).permutation(len(table))
    assert extract_meta_features(table.subset(perm), glob) == x
    assert 0.0 <= score_data(x) <= 1.0


def test_score_data_values():
    def meta(e, c):
        return MetaFeatures((1,), 0.0, e, c)

    assert score_data(meta(1.0, 1.0)) == 1.0
    assert score_data(meta(0.0, 0.0)) == 0.0
    assert score_data(meta(0.8113, 0.5)) == pytest.approx(0.65565, abs=1e-12)
    assert round(score_data(meta(0.8113, 0.5)), 3) == 0.656


def test_score_perf_values():
    assert score_perf(PerfMetrics(1, 1, 1, 1, 0, 0)) == 1.0
    assert score_perf(PerfMetrics(0.9, 0.5, 0.9, 0.5, 0.2, 0.1)) == pytest.approx(2.6 / 3)
    assert score_perf(PerfMetrics(0, 0, 0, 0, 1, 1)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_scores_monotone(e1, e2, fpr1, fpr2):
    lo, hi = sorted((e1, e2))
    assert score_data(MetaFeatures((1,), 0, lo, 0.3)) <= score_data(MetaFeatures((1,), 0, hi, 0.3))
    lo, hi = sorted((fpr1, fpr2))
    better = PerfMetrics(0.7, 0.5, 0.6, 0.5, lo, 0.4)
    worse = PerfMetrics(0.7, 0.5, 0.6, 0.5, hi, 0.4)
    assert score_perf(better) >= score_perf(worse)


def test_perf_metrics_validation():
    with pytest.raises(ValueError):
        PerfMetrics(1.2, 0, 0, 0, 0, 0)


def test_evaluate_client_perfect_and_zero_model():
    arch = Architecture((2, 2))
    # Identity weights: class = argmax feature.
    perfect = ModelParams(np.array([5.0, 0.0, 0.0, 5.0, 0.0, 0.0]), arch)
    val = make_table([0, 1, 0, 1], n_features=2)
    val = type(val)(np.eye(2)[val.labels], val.labels, val.class_names)
    p = evaluate_client(perfect, val)
    assert (p.accuracy, p.f1, p.fpr, p.fnr) == (1.0, 1.0, 0.0, 0.0)
    zero = ModelParams(np.zeros(arch.n_params), arch)
    assert evaluate_client(zero, val).accuracy == 0.5


def test_evaluate_client_agrees_with_metrics_module():
    params = init_params(Architecture((3, 5, 3)), 4)
    val = make_table(np.arange(30) % 3, n_features=3, seed=2)
    p = evaluate_client(params, val)
    r = classification_metrics(confusion(predict(params, val.features), val.labels, 3))
    assert (p.accuracy, p.precision, p.recall, p.f1, p.fpr) == (
        r.accuracy, r.precision, r.recall, r.f1, r.fpr
    )
    assert p.fnr == pytest.approx(1 - p.recall)


def test_evaluate_client_empty_val_fallbacks():
    params = init_params(Architecture((3, 2)), 0)
    empty = make_table([0, 1], n_features=3).subset([])
    assert evaluate_client(params, empty) == PerfMetrics.neutral()
    prev = PerfMetrics(0.9, 0.8, 0.7, 0.75, 0.1, 0.3)
    assert evaluate_client(params, empty, previous=prev) is prev


def test_evaluate_client_width_mismatch():
    params = init_params(Architecture((3, 2)), 0)
    with pytest.raises(ValueError):
        evaluate_client(params, make_table([0, 1], n_features=4))


def test_perf_from_predictions():
    p = perf_from_predictions([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert p.accuracy == 0.5 and p.f1 == pytest.approx(1 / 3)
