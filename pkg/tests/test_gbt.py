import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oclfd.gbt import balance_state, balanced_select, imbalance_objective, proportions
from oclfd.rcs import farthest_point_order


def test_single_class_pool_follows_farthest_point_order(rng):
    X = rng.standard_normal((12, 2))
    picks, state = balanced_select(X, np.full(12, 1), {0: 50}, 5, 2)
    assert picks.tolist() == farthest_point_order(X)[:5].tolist()
    np.testing.assert_array_equal(state.coreset_class_proportions, [0.0, 1.0])


def test_symmetric_pool_with_empty_buffer_splits_evenly(rng):
    X = rng.standard_normal((20, 2))
    y = np.repeat([0, 1], 10)
    picks, _ = balanced_select(X, y, {}, 10)
    assert np.bincount(y[picks]).tolist() == [5, 5]


def test_skewed_buffer_pulls_selection_to_minority(rng):
    X = rng.standard_normal((40, 2))
    y = np.repeat([0, 1], 20)
    picks, _ = balanced_select(X, y, {0: 90, 1: 10}, 10)
    assert (y[picks] == 1).sum() >= 8


def test_exhausted_candidates_stop_early(rng):
    picks, _ = balanced_select(rng.standard_normal((3, 2)), [0, 1, 1], {}, 10)
    assert sorted(picks.tolist()) == [0, 1, 2]
    with pytest.raises(ValueError):
        balanced_select(rng.standard_normal((3, 2)), [0, 1, 1], {}, 0)


def test_objective_uniform_is_zero():
    assert imbalance_objective([0.5, 0.5], [0.5, 0.5], 2, 10, 2, 100) == 0.0


def test_objective_normalized_first_term():
    assert imbalance_objective([1.0, 0.0], [0.5, 0.5], 2, 10, 2, 4) == pytest.approx(0.5)


def test_objective_verbatim_first_term():
    # c/s = 0.2 per class; bc_t/bn = 2/4 = 0.5 makes the buffer term vanish
    v = imbalance_objective([0.2, 0.8], [0.5, 0.5], 2, 10, 2, 4, mode="verbatim")
    assert v == pytest.approx(0.3)


def test_objective_rejects_bad_inputs():
    with pytest.raises(ValueError):
        imbalance_objective([1.0], [1.0], 2, 1, 1, 1)
    with pytest.raises(ValueError):
        imbalance_objective([1.0], [1.0], 1, 1, 1, 1, mode="other")


def test_balance_state_proportions_on_simplex():
    st_ = balance_state([1, 1, 2], {0: 5, 1: 1}, 3)
    assert st_.coreset_class_proportions.sum() == pytest.approx(1, abs=1e-9)
    assert st_.buffer_class_proportions.sum() == pytest.approx(1, abs=1e-9)
    assert st_.target_proportion == pytest.approx(1 / 3)
    assert st_.imbalance_score >= 0
    assert proportions([0, 0]).tolist() == [0.0, 0.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
def test_no_duplicates(seed, s):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 30))
    y = r.integers(0, 3, n)
    picks, _ = balanced_select(r.standard_normal((n, 2)), y, {0: int(r.integers(0, 50))}, s, 3)
    assert len(set(picks.tolist())) == len(picks) == min(s, n)


def test_greedy_beats_random_on_canonical_fixture():
    buffer = {0: 90, 1: 10}
    y = np.repeat([0, 1], 50)
    wins = 0
    trials = 200
    for seed in range(trials):
        r = np.random.default_rng(seed)
        X = r.standard_normal((100, 2))
        _, state = balanced_select(X, y, buffer, 10, 2)
        rand = balance_state(y[r.choice(100, 10, replace=False)], buffer, 2)
        wins += state.imbalance_score <= rand.imbalance_score
    assert wins / trials >= 0.95
