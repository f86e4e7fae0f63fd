import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amafed.metrics import classification_metrics, confusion, ecdf, fleet_stats
from conftest import brute_force_metrics


def test_confusion_hand_count():
    assert confusion([0, 1, 1, 1], [0, 0, 1, 1], 2).tolist() == [[1, 1], [0, 2]]


def test_confusion_diagonal_and_empty():
    assert confusion([0, 2, 1], [0, 2, 1], 3).tolist() == np.diag([1, 1, 1]).tolist()
    assert confusion([], [], 3).sum() == 0


def test_confusion_rejects_out_of_range():
    with pytest.raises(ValueError):
        confusion([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        confusion([0, 1], [0, -1], 3)
    with pytest.raises(ValueError):
        confusion([0], [0, 1], 3)


def test_binary_hand_case():
    # TP=8, FP=2, FN=1, TN=9 for the positive class 1.
    cm = np.array([[9, 2], [1, 8]])
    r = classification_metrics(cm)
    assert r.accuracy == pytest.approx(0.85, abs=1e-12)
    assert r.per_class_precision[1] == pytest.approx(0.8, abs=1e-12)
    assert r.per_class_recall[1] == pytest.approx(8 / 9, abs=1e-12)
    assert r.per_class_f1[1] == pytest.approx(16 / 19, abs=1e-12)
    assert r.per_class_fpr[1] == pytest.approx(2 / 11, abs=1e-12)
    assert round(r.per_class_recall[1], 4) == 0.8889
    assert round(r.per_class_f1[1], 4) == 0.8421
    assert round(r.per_class_fpr[1], 4) == 0.1818


def test_perfect_matrix():
    r = classification_metrics(np.diag([3, 5, 2]))
    assert (r.accuracy, r.f1, r.fpr) == (1.0, 1.0, 0.0)


def test_single_predicted_class_balanced():
    r = classification_metrics(confusion([0, 0, 0, 0], [0, 0, 1, 1], 2))
    assert r.accuracy == 0.5
    assert r.f1 == pytest.approx(1 / 3, abs=1e-12)


def test_predicted_but_absent_class_counts_as_zero():
    # True labels only class 0; one sample predicted as class 2.
    r = classification_metrics(confusion([0, 0, 2], [0, 0, 0], 3))
    f1_0 = 2 * 1.0 * (2 / 3) / (1.0 + 2 / 3)
    assert r.f1 == pytest.approx((f1_0 + 0.0) / 2, abs=1e-12)
    assert np.isnan(r.per_class_f1[1])


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        classification_metrics(np.zeros((3, 3), dtype=int))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 5, 10]), st.integers(1, 60))
def test_matches_brute_force_counter(seed, c, n):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, c, n)
    preds = np.where(rng.random(n) < 0.6, labels, rng.integers(0, c, n))
    cm = confusion(preds, labels, c)
    oracle = brute_force_metrics(preds.tolist(), labels.tolist(), c)
    for k, (tp, fp, fn, tn) in enumerate(oracle["counts"]):
        assert cm[k, k] == tp
        assert cm[:, k].sum() - cm[k, k] == fp
        assert cm[k, :].sum() - cm[k, k] == fn
        assert cm.sum() - tp - fp - fn == tn
    r = classification_metrics(cm)
    for name in ("accuracy", "precision", "recall", "f1", "fpr"):
        assert abs(getattr(r, name) - oracle[name]) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 50))
def test_metric_ranges_identities_and_order_invariance(seed, c, n):
    rng = np.random.default_rng(seed)
    labels, preds = rng.integers(0, c, n), rng.integers(0, c, n)
    r = classification_metrics(confusion(preds, labels, c))
    for v in (r.accuracy, r.precision, r.recall, r.f1, r.fpr, r.tpr, r.fnr):
        assert 0.0 <= v <= 1.0
    assert r.tpr == r.recall
    assert r.fnr == pytest.approx(1 - r.recall)
    perm = rng.permutation(n)
    r2 = classification_metrics(confusion(preds[perm], labels[perm], c))
    assert r2.summary() == r.summary()


# --- fleet statistics ---------------------------------------------------------


def test_fleet_stats_constant():
    s = fleet_stats([0.7] * 6)
    assert s.minimum == s.p5 == s.median == 0.7
    assert s.mean == pytest.approx(0.7, abs=1e-15)  # summation rounding
    assert s.iqr == 0.0


def test_fleet_stats_small():
    s = fleet_stats([0.0, 0.5, 1.0])
    assert s.minimum == 0.0 and s.median == 0.5


def test_fleet_stats_linear_percentile():
    values = 0.90 + 0.01 * np.arange(10)
    assert fleet_stats(values).p5 == pytest.approx(0.9045, abs=1e-12)


def test_fleet_stats_empty():
    with pytest.raises(ValueError):
        fleet_stats([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_fleet_stats_ordering(values):
    s = fleet_stats(values)
    assert s.minimum <= s.p5 <= s.median
    assert s.iqr >= 0


# --- ECDF ---------------------------------------------------------------------


def test_ecdf_cases():
    assert ecdf([0.4]) == [(0.4, 1.0)]
    pts = ecdf([1, 1, 2])
    assert pts[0][0] == 1 and pts[0][1] == pytest.approx(2 / 3)
    assert pts[1] == (2.0, 1.0)
    with pytest.raises(ValueError):
        ecdf([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40))
def test_ecdf_monotone_terminal_one(values):
    pts = ecdf(values)
    xs = [p[0] for p in pts]
    fs = [p[1] for p in pts]
    assert xs == sorted(set(xs))
    assert all(a < b for a, b in zip(fs, fs[1:]))
    assert fs[-1] == 1.0
