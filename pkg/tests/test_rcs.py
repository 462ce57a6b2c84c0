import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oclfd.buffer import VARIANCE_FLOOR, ClusterSummary, summarize
from oclfd.model import InputShapeError
from oclfd.rcs import (CoresetClampWarning, RcsConfig, cell_summaries, cluster_batch, coreset_size,
                       farthest_point_coreset, filter_redundant, kl_gaussian, minibatch_kmeans,
                       symmetric_kl)


def gauss(mean, var, cid=0, count=10):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape).copy()
    return ClusterSummary(cid, count, mean, var, list(range(count)))


def min_pairwise(X):
    return min(np.linalg.norm(a - b) for a, b in itertools.combinations(X, 2))


def lloyd(X, init, iters=100):
    C = init.copy()
    for _ in range(iters):
        lab = ((X[:, None] - C[None]) ** 2).sum(-1).argmin(1)
        C = np.array([X[lab == k].mean(0) for k in range(len(C))])
    return C


# ----------------------------------------------------------------- clustering

def test_cluster_count_equal_to_batch_skips_clustering(rng):
    X = rng.standard_normal((4, 3))
    cl = cluster_batch(X, RcsConfig(cluster_count=4), rng)
    assert [c.member_ids for c in cl] == [[0], [1], [2], [3]]
    for c in cl:
        np.testing.assert_array_equal(c.diag_variance, np.full(3, VARIANCE_FLOOR))


def test_single_cluster_mean_is_batch_mean(rng):
    X = rng.standard_normal((50, 4))
    (c,) = cluster_batch(X, RcsConfig(cluster_count=1), rng)
    np.testing.assert_array_equal(c.mean, X.mean(0))
    assert c.count == 50


def test_two_blobs_match_lloyd_oracle(rng):
    X = np.vstack([rng.standard_normal((100, 2)) * 0.5, rng.standard_normal((100, 2)) * 0.5 + [8, 8]])
    cl = cluster_batch(X, RcsConfig(cluster_count=2), rng)
    oracle = lloyd(X, X[[0, 150]])
    got = sorted((c.mean for c in cl), key=lambda m: m[0])
    want = sorted(oracle, key=lambda m: m[0])
    for g, w in zip(got, want):
        assert np.linalg.norm(g - w) < 0.1
    assert sorted(i for c in cl for i in c.member_ids) == list(range(200))


def test_kmeans_has_no_empty_clusters(rng):
    X = np.vstack([rng.standard_normal((30, 2)) * 0.01, [[50.0, 50.0]]])
    _, labels = minibatch_kmeans(X, 3, rng, minibatch_size=8, max_iters=5)
    assert len(np.unique(labels)) == 3


def test_empty_batch_rejected(rng):
    with pytest.raises(ValueError):
        cluster_batch(np.zeros((0, 2)), RcsConfig(), rng)


# ----------------------------------------------------------------- KL

def test_kl_of_identical_summaries_is_zero():
    p = gauss([1.0, -2.0], [0.5, 3.0])
    assert kl_gaussian(p, p) == 0.0


def test_kl_unit_variance_mean_shift():
    assert kl_gaussian(gauss(0.0, 1.0), gauss(1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)


def test_kl_against_quadrature():
    p, q = gauss(0.0, 1.0), gauss(0.0, 4.0)

    def integrand(x):
        lp = -0.5 * x * x - 0.5 * math.log(2 * math.pi)
        lq = -0.5 * x * x / 4 - 0.5 * math.log(2 * math.pi * 4)
        return math.exp(lp) * (lp - lq)

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-12)
    assert abs(kl_gaussian(p, q) - val) < 1e-4
    assert kl_gaussian(p, q) == pytest.approx(0.5 * (0.25 - 1 + math.log(4)), rel=1e-12)


def test_kl_dimension_mismatch():
    with pytest.raises(InputShapeError):
        kl_gaussian(gauss([0, 0], 1), gauss([0], 1))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_kl_nonnegative_and_symmetric_version_symmetric(d, seed):
    r = np.random.default_rng(seed)
    p = gauss(r.normal(0, 3, d), np.maximum(r.exponential(1, d), VARIANCE_FLOOR))
    q = gauss(r.normal(0, 3, d), np.maximum(r.exponential(1, d), VARIANCE_FLOOR))
    assert kl_gaussian(p, q) >= 0 and kl_gaussian(p, p) == 0
    assert symmetric_kl(p, q) == pytest.approx(symmetric_kl(q, p), rel=1e-12)


# ----------------------------------------------------------------- filtering

def test_empty_buffer_keeps_everything():
    cl = [gauss(0.0, 1.0, 0), gauss(5.0, 1.0, 1)]
    out = filter_redundant(cl, [], 1.0)
    assert out.surviving_clusters == cl and out.dropped_clusters == []


def test_cluster_matching_buffer_class_is_dropped():
    cl = [gauss([0.0, 0.0], 1.0, 0), gauss([9.0, 9.0], 1.0, 1)]
    out = filter_redundant(cl, [gauss([0.0, 0.0], 1.0, 0)], 0.1)
    assert [c.cluster_id for c in out.dropped_clusters] == [0]
    assert [c.cluster_id for c in out.surviving_clusters] == [1]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.0, 0.5, 2.0]))
def test_filter_partition_matches_brute_force(seed, tau):
    r = np.random.default_rng(seed)
    means = r.integers(-2, 3, size=(4, 2)).astype(float)
    cl = [gauss(m, 1.0, i) for i, m in enumerate(means)]
    buf = [gauss(m, 1.0, b) for b, m in enumerate(r.integers(-2, 3, size=(3, 2)).astype(float))]
    out = filter_redundant(cl, buf, tau)
    kl = np.array([[symmetric_kl(u, b) for u in cl] for b in buf])
    np.testing.assert_allclose(out.kl_matrix, kl, rtol=1e-12)
    assert (out.kl_matrix >= 0).all()
    dropped = {i for i in range(4) if kl[:, i].min() <= tau}
    assert {c.cluster_id for c in out.dropped_clusters} == dropped
    assert {c.cluster_id for c in out.surviving_clusters} == set(range(4)) - dropped


def test_directed_mode_uses_cluster_to_buffer_kl():
    p, q = gauss(0.0, 1.0), gauss(0.0, 4.0)
    out = filter_redundant([p], [q], 0.0, mode="directed")
    assert out.kl_matrix[0, 0] == kl_gaussian(p, q)


def test_per_cluster_buffer_entries_and_missing_cells():
    cl = [gauss(0.0, 1.0, 0), gauss(5.0, 1.0, 1)]
    out = filter_redundant(cl, [[gauss(0.0, 1.0), None]], 0.1)
    assert out.kl_matrix[0, 0] == 0.0 and out.kl_matrix[0, 1] == np.inf
    assert [c.cluster_id for c in out.surviving_clusters] == [1]
    assert out.to_json()["kl_matrix"] == [[0.0, None]]


def test_variance_shrinkage_toward_buffer_group():
    p = ClusterSummary(0, 2, np.zeros(1), np.array([0.01]), [0, 1])
    q = gauss(0.0, 1.0)
    out = filter_redundant([p], [q], 10.0, prior_count=2.0)
    shrunk = gauss(0.0, (2 * 0.01 + 2 * 1.0) / 4)
    assert out.kl_matrix[0, 0] == pytest.approx(symmetric_kl(shrunk, q), rel=1e-12)


def test_singleton_cluster_borrows_buffer_variance():
    p = ClusterSummary(0, 1, np.array([2.0]), np.array([VARIANCE_FLOOR]), [0])
    q = gauss(0.0, 4.0)
    out = filter_redundant([p], [q], 10.0)
    # equal variances leave only the Mahalanobis term: 0.5 * 2^2 / 4
    assert out.kl_matrix[0, 0] == pytest.approx(0.5, rel=1e-12)


def test_cell_summaries_group_by_nearest_centroid(rng):
    X = np.vstack([rng.standard_normal((20, 2)), rng.standard_normal((20, 2)) + 10])
    y = np.array([0] * 30 + [1] * 10)
    cl = [gauss([0.0, 0.0], 1.0, 0), gauss([10.0, 10.0], 1.0, 1)]
    rows = cell_summaries(X, y, cl)
    assert len(rows) == 2
    near = ((X[:, None] - np.array([[0, 0], [10, 10]])[None]) ** 2).sum(-1).argmin(1)
    for label, row in zip((0, 1), rows):
        for u, s in enumerate(row):
            members = np.flatnonzero((y == label) & (near == u))
            if members.size < 2:
                assert s is None
            else:
                assert sorted(s.member_ids) == members.tolist()
                np.testing.assert_allclose(s.mean, X[members].mean(0), rtol=1e-12)
    assert rows[1][0] is None  # class 1 lives only around the second centroid
    fb = cell_summaries(X, y, cl, fallback=True)
    assert fb[1][0].count == 10
    with pytest.raises(InputShapeError):
        cell_summaries(np.zeros((3, 3)), [0, 0, 0], cl)
    assert cell_summaries(np.zeros((0, 2)), [], cl) == []


# ----------------------------------------------------------------- coreset

def test_farthest_pair_one_dimensional():
    assert sorted(farthest_point_coreset(np.array([[0.0], [1.0], [10.0]]), 2)) == [0, 2]


def test_full_size_selects_everything(rng):
    X = rng.standard_normal((7, 2))
    assert sorted(farthest_point_coreset(X, 7)) == list(range(7))


def test_clamped_request_warns(rng):
    X = rng.standard_normal((3, 2))
    with pytest.warns(CoresetClampWarning):
        idx = farthest_point_coreset(X, 5)
    assert sorted(idx) == [0, 1, 2]


def test_first_two_realize_the_diameter(rng):
    X = rng.standard_normal((12, 3))
    idx = farthest_point_coreset(X, 5)
    diam = max(np.linalg.norm(a - b) for a, b in itertools.combinations(X, 2))
    assert np.linalg.norm(X[idx[0]] - X[idx[1]]) == pytest.approx(diam, rel=1e-12)
    assert len(set(idx.tolist())) == 5


def test_ties_go_to_lowest_index_pair():
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    assert farthest_point_coreset(X, 2).tolist() == [0, 1]


def test_greedy_beats_90th_percentile_of_subsets(rng):
    for _ in range(20):
        X = rng.random((8, 2))
        greedy = min_pairwise(X[farthest_point_coreset(X, 4)])
        subsets = sorted(min_pairwise(X[list(s)]) for s in itertools.combinations(range(8), 4))
        assert greedy >= np.percentile(subsets, 90)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 9))
def test_selection_is_permutation_invariant(seed, s):
    r = np.random.default_rng(seed)
    X = r.random((10, 2))
    perm = r.permutation(10)
    a = {tuple(p) for p in X[farthest_point_coreset(X, s)]}
    b = {tuple(p) for p in X[perm][farthest_point_coreset(X[perm], s)]}
    assert a == b


@pytest.mark.parametrize("n,ratio,want", [(10, 0.6, 6), (7, 0.5, 4), (3, 1.0, 3), (1, 0.1, 1), (0, 0.6, 0)])
def test_coreset_size_rule(n, ratio, want):
    assert coreset_size(n, ratio) == want == min(math.ceil(ratio * n), n)


def test_config_validation():
    for bad in ({"cluster_count": 0}, {"kl_threshold": -1}, {"coreset_ratio": 0.0},
                {"kl_mode": "x"}, {"buffer_partition": "x"}):
        with pytest.raises(ValueError):
            RcsConfig(**bad)


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize(np.zeros((0, 2)), [], 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        farthest_point_coreset(np.zeros((1, 2)), 1)
