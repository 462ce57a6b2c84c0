"""Retrospective coreset selection.

An arriving batch is clustered with mini-batch k-means, each cluster is
compared against the statistics of the replay buffer, clusters that look like
something already stored are dropped, and the rest are thinned with a
farthest-point (max-min distance) greedy pass.

The buffer side of the comparison is either one Gaussian per class
(``buffer_partition="class"``) or, by default, one Gaussian per class and
batch cell (``"cell"``): the buffer samples of a class that fall nearest to
a batch cluster's centroid.  Comparing a cluster with a whole class makes any
k-means piece of a single well-known blob look novel, because the piece is
narrower and off-centre; the cell view compares it with the same region.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .buffer import VARIANCE_FLOOR, ClusterSummary, summarize
from .model import InputShapeError


class CoresetClampWarning(UserWarning):
    """Requested coreset is larger than the candidate pool."""


@dataclass
class RcsConfig:
    cluster_count: int = 3
    kl_threshold: float = 2.0
    coreset_ratio: float = 0.6
    minibatch_size: int = 64
    max_iters: int = 50
    kl_mode: str = "symmetric"
    buffer_partition: str = "cell"
    shrink_variance: bool = True

    def __post_init__(self):
        if self.cluster_count < 1:
            raise ValueError("cluster_count must be >= 1")
        if self.kl_threshold < 0:
            raise ValueError("kl_threshold must be >= 0")
        if not 0 < self.coreset_ratio <= 1:
            raise ValueError("coreset_ratio must be in (0, 1]")
        if self.kl_mode not in ("symmetric", "directed"):
            raise ValueError(f"unknown kl_mode {self.kl_mode!r}")
        if self.buffer_partition not in ("cell", "class"):
            raise ValueError(f"unknown buffer_partition {self.buffer_partition!r}")


@dataclass
class FilteredBatch:
    surviving_clusters: list = field(default_factory=list)
    dropped_clusters: list = field(default_factory=list)
    kl_matrix: np.ndarray = None

    def surviving_indices(self) -> np.ndarray:
        idx = [i for c in self.surviving_clusters for i in c.member_ids]
        return np.asarray(sorted(idx), dtype=int)

    def to_json(self) -> dict:
        return {
            "surviving": [c.cluster_id for c in self.surviving_clusters],
            "dropped": [c.cluster_id for c in self.dropped_clusters],
            "surviving_sizes": [c.count for c in self.surviving_clusters],
            "dropped_sizes": [c.count for c in self.dropped_clusters],
            # JSON has no infinity; empty buffer cells come out as null
            "kl_matrix": [[v if np.isfinite(v) else None for v in row]
                          for row in np.asarray(self.kl_matrix).tolist()],
        }


def coreset_size(n_surviving: int, ratio: float) -> int:
    return min(math.ceil(ratio * n_surviving - 1e-9), n_surviving)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def minibatch_kmeans(X: np.ndarray, k: int, rng: np.random.Generator, *,
                     minibatch_size: int = 64, max_iters: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Sculley-style mini-batch k-means.

    Centroids start at ``k`` distinct random samples.  Each iteration assigns a
    random minibatch to the nearest centroid and moves that centroid toward the
    sample with step ``1 / (number of samples it has absorbed)``.  After the
    iterations every sample is assigned; empty clusters are reseeded at the
    sample farthest from its centroid until none remain.

    Returns:
        (centroids, labels)
    """
    n = X.shape[0]
    centroids = X[rng.choice(n, size=k, replace=False)].copy()
    counts = np.zeros(k)
    mb = min(minibatch_size, n)
    for _ in range(max_iters):
        batch = X[rng.choice(n, size=mb, replace=False)]
        assign = _sq_dists(batch, centroids).argmin(1)
        # per-sample steps of size 1/count telescope into a running mean
        m = np.bincount(assign, minlength=k).astype(float)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, batch)
        hit = m > 0
        counts[hit] += m[hit]
        centroids[hit] += (sums[hit] - m[hit, None] * centroids[hit]) / counts[hit, None]
    labels = _sq_dists(X, centroids).argmin(1)
    for _ in range(k):
        empty = np.setdiff1d(np.arange(k), labels)
        if empty.size == 0:
            break
        d = _sq_dists(X, centroids)[np.arange(n), labels]
        for c in empty:
            far = int(d.argmax())
            centroids[c] = X[far]
            d[far] = -1.0
        labels = _sq_dists(X, centroids).argmin(1)
    return centroids, labels


def cluster_batch(batch, cfg: RcsConfig, rng: np.random.Generator,
                  variance_floor: float = VARIANCE_FLOOR) -> list[ClusterSummary]:
    """Cluster a batch; member ids are row indices into ``batch``."""
    X = np.atleast_2d(np.asarray(batch, dtype=float))
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty batch")
    k = min(cfg.cluster_count, n)
    if k == n:
        labels = np.arange(n)
    elif k == 1:
        labels = np.zeros(n, dtype=int)
    else:
        _, labels = minibatch_kmeans(X, k, rng, minibatch_size=cfg.minibatch_size,
                                     max_iters=cfg.max_iters)
    out = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if members.size:
            out.append(summarize(X[members], members.tolist(), c, variance_floor))
    return out


def kl_gaussian(p: ClusterSummary, q: ClusterSummary) -> float:
    """KL(p || q) between diagonal Gaussians."""
    if p.mean.shape != q.mean.shape:
        raise InputShapeError(f"dimension mismatch {p.mean.shape} vs {q.mean.shape}")
    vp, vq = p.diag_variance, q.diag_variance
    diff = q.mean - p.mean
    kl = 0.5 * np.sum(vp / vq + diff * diff / vq - 1.0 + np.log(vq / vp))
    return max(float(kl), 0.0)


def symmetric_kl(p: ClusterSummary, q: ClusterSummary) -> float:
    return 0.5 * (kl_gaussian(p, q) + kl_gaussian(q, p))


def cell_summaries(buffer_features, buffer_labels, batch_clusters: list[ClusterSummary],
                   variance_floor: float = VARIANCE_FLOOR, min_count: int = 2,
                   fallback: bool = False) -> list[list]:
    """Summaries of buffer samples grouped by class and nearest batch centroid.

    Returns one list per buffer class (ascending label); entry ``u`` is the
    summary of that class's samples whose nearest centroid is cluster ``u``.
    When fewer than ``min_count`` samples land there the entry is ``None``,
    or with ``fallback`` the summary of the whole class.
    """
    X = np.atleast_2d(np.asarray(buffer_features, dtype=float))
    y = np.asarray(buffer_labels, dtype=int)
    if y.size == 0 or not batch_clusters:
        return []
    C = np.stack([c.mean for c in batch_clusters])
    if X.shape[1] != C.shape[1]:
        raise InputShapeError(f"dimension mismatch {X.shape[1]} vs {C.shape[1]}")
    cell = _sq_dists(X, C).argmin(1)
    out = []
    for label in np.unique(y):
        whole = np.flatnonzero(y == label)
        row = []
        for u in range(len(batch_clusters)):
            members = whole[cell[whole] == u]
            if members.size < min_count and fallback:
                members = whole
            row.append(summarize(X[members], members.tolist(), int(label), variance_floor)
                       if members.size >= min_count else None)
        out.append(row)
    return out


def filter_redundant(batch_clusters: list[ClusterSummary], buffer_summaries: list,
                     tau: float, mode: str = "symmetric", prior_count: float = 0.0) -> FilteredBatch:
    """Drop batch clusters whose closest buffer group is within ``tau``.

    Each entry of ``buffer_summaries`` is either one summary per buffer class,
    compared with every batch cluster, or a per-cluster list as produced by
    :func:`cell_summaries` (``None`` entries count as infinitely far).
    ``kl_matrix[b, u]`` holds the divergence between buffer entry ``b`` and
    batch cluster ``u``; in directed mode it is KL(batch cluster || buffer).
    Single-sample clusters take the buffer group's variance, which turns the
    test into a Mahalanobis check of the point against that group.
    """
    div = symmetric_kl if mode == "symmetric" else kl_gaussian
    kl = np.zeros((len(buffer_summaries), len(batch_clusters)))
    for b, qs in enumerate(buffer_summaries):
        for u, ps in enumerate(batch_clusters):
            q = qs[u] if isinstance(qs, list) else qs
            if q is None:
                kl[b, u] = np.inf
                continue
            if prior_count > 0:
                # small clusters say little about their spread; shrink toward the buffer's
                v = (ps.count * ps.diag_variance + prior_count * q.diag_variance) / (ps.count + prior_count)
                ps = ClusterSummary(ps.cluster_id, ps.count, ps.mean, v, ps.member_ids)
            elif ps.count < 2:
                # a single point has no spread of its own; borrow the buffer's
                ps = ClusterSummary(ps.cluster_id, ps.count, ps.mean, q.diag_variance, ps.member_ids)
            kl[b, u] = div(ps, q)
    out = FilteredBatch(kl_matrix=kl)
    for u, ps in enumerate(batch_clusters):
        if kl.shape[0] and kl[:, u].min() <= tau:
            out.dropped_clusters.append(ps)
        else:
            out.surviving_clusters.append(ps)
    return out


def farthest_point_order(X: np.ndarray, size: int | None = None) -> np.ndarray:
    """Greedy max-min ordering seeded with the farthest pair.

    Ties go to the lowest index (pair compared lexicographically).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    size = n if size is None else size
    if size <= 0 or n == 0:
        return np.zeros(0, dtype=int)
    if n == 1:
        return np.zeros(1, dtype=int)
    diff = X[:, None, :] - X[None, :, :]
    D = np.sqrt((diff * diff).sum(-1))
    iu, ju = np.triu_indices(n, 1)
    best = int(np.argmax(D[iu, ju]))  # first max in row-major order = lowest (i, j)
    order = [int(iu[best]), int(ju[best])][:size]
    if size <= 2:
        return np.asarray(order, dtype=int)
    mind = np.minimum(D[order[0]], D[order[1]])
    chosen = np.zeros(n, dtype=bool)
    chosen[order] = True
    while len(order) < size:
        cand = np.where(chosen, -np.inf, mind)
        nxt = int(np.argmax(cand))
        order.append(nxt)
        chosen[nxt] = True
        mind = np.minimum(mind, D[nxt])
    return np.asarray(order, dtype=int)


def farthest_point_coreset(candidates, target_size: int) -> np.ndarray:
    """Indices of a ``target_size`` spread-out subset (see :func:`farthest_point_order`)."""
    X = np.atleast_2d(np.asarray(candidates, dtype=float))
    n = X.shape[0]
    if target_size > n:
        warnings.warn(f"coreset size {target_size} clamped to {n} candidates", CoresetClampWarning)
        target_size = n
    return farthest_point_order(X, target_size)
