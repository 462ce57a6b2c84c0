import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oclfd.metrics import UndefinedMetricError, compute_metrics, task_metrics


def brute_force(cm):
    """Metric definitions written out element by element, no vectorization."""
    k = len(cm)
    support = [sum(cm[i][j] for j in range(k)) for i in range(k)]
    predicted = [sum(cm[i][j] for i in range(k)) for j in range(k)]
    classes = [c for c in range(k) if support[c] > 0]
    rec = {c: cm[c][c] / support[c] for c in classes}
    prec = {c: cm[c][c] / predicted[c] for c in classes if predicted[c] > 0}
    f1 = {}
    for c in classes:
        p = prec.get(c, 0.0)
        f1[c] = 0.0 if p + rec[c] == 0 else 2 * p * rec[c] / (p + rec[c])
    g = math.prod(rec.values()) ** (1 / len(classes))
    if k == 2 and support[1] > 0:
        return rec[1], prec.get(1, 0.0), f1[1], g
    mean = lambda v: sum(v) / len(v) if v else 0.0  # noqa: E731
    return mean(list(rec.values())), mean(list(prec.values())), mean(list(f1.values())), g


def test_perfect_diagonal():
    m = task_metrics(np.diag([5, 3, 7]))
    assert (m.recall, m.precision, m.f1, m.gmean) == (1.0, 1.0, 1.0, 1.0)


def test_binary_worked_example():
    # rows are true (normal, fault); TP=8, FN=2, FP=1, TN=9
    m = task_metrics([[9, 1], [2, 8]])
    assert m.recall == pytest.approx(0.8, abs=1e-12)
    assert m.precision == pytest.approx(8 / 9, abs=1e-12)
    assert m.f1 == pytest.approx(16 / 19, abs=1e-12)
    assert m.gmean == pytest.approx(math.sqrt(0.8 * 0.9), abs=1e-12)
    assert round(m.precision, 4) == 0.8889 and round(m.f1, 4) == 0.8421 and round(m.gmean, 4) == 0.8485


def test_never_predicted_class_is_flagged_and_zeroes_gmean():
    m = task_metrics([[5, 0, 0], [0, 4, 0], [1, 2, 0]])
    assert m.unpredicted_classes == [2]
    assert 2 not in m.per_class_precision
    assert m.gmean == 0.0


def test_zero_support_class_excluded_and_reported():
    m = task_metrics([[4, 1, 0], [0, 0, 0], [0, 1, 3]])
    assert m.unsupported_classes == [1]
    assert set(m.per_class_recall) == {0, 2}
    assert m.recall == pytest.approx((0.8 + 0.75) / 2)


def test_all_zero_matrix_is_undefined():
    with pytest.raises(UndefinedMetricError):
        task_metrics(np.zeros((3, 3)))
    with pytest.raises(UndefinedMetricError):
        compute_metrics([])
    with pytest.raises(ValueError):
        task_metrics(np.zeros((2, 3)))


@settings(max_examples=200, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(2, 5)).map(lambda t: (t[0], t[0])),
              elements=st.integers(0, 50)))
def test_matches_brute_force(cm):
    if cm.sum() == 0:
        return
    m = task_metrics(cm)
    want = brute_force(cm.tolist())
    assert np.allclose((m.recall, m.precision, m.f1, m.gmean), want, rtol=0, atol=1e-12)
    for v in (m.recall, m.precision, m.f1, m.gmean):
        assert 0.0 <= v <= 1.0


def test_avg_end_is_mean_over_tasks():
    a, b = np.array([[9, 1], [2, 8]]), np.array([[5, 0], [0, 5]])
    r = compute_metrics([a, b], training_time=1.5)
    assert r.avg_end_f1 == pytest.approx((16 / 19 + 1.0) / 2)
    assert r.training_time_seconds == 1.5
    assert "training_time_seconds" not in r.to_json()
    assert r.to_json(include_timing=True)["training_time_seconds"] == 1.5
    assert sum(map(np.sum, r.confusions)) == 30
