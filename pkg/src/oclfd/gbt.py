"""Global balance: coreset composition that accounts for what the buffer holds.

Selection is greedy.  At every pick the class whose share of
``buffer + already selected`` lies furthest below ``1/c`` gets the next
sample; inside a class samples come out in farthest-point order.  The focal
loss that goes with it lives in :mod:`oclfd.losses` and is re-exported here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import focal_loss, focal_loss_batch  # noqa: F401
from .model import LossConfig as FocalLossConfig  # noqa: F401
from .rcs import farthest_point_order

OBJECTIVE_MODES = ("normalized", "verbatim")


@dataclass
class BalanceState:
    coreset_class_proportions: np.ndarray
    buffer_class_proportions: np.ndarray
    target_proportion: float
    imbalance_score: float

    def to_json(self) -> dict:
        return {
            "coreset_class_proportions": self.coreset_class_proportions.tolist(),
            "buffer_class_proportions": self.buffer_class_proportions.tolist(),
            "target_proportion": self.target_proportion,
            "imbalance_score": self.imbalance_score,
        }


def proportions(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    return counts / total if total > 0 else np.zeros_like(counts)


def imbalance_objective(ps, pb, c: int, s: int, bc_t: int, bn: int,
                        mode: str = "normalized", lam: float = 1.0) -> float:
    """Two-term L1 distance of coreset and buffer class shares from their targets.

    ``normalized`` compares against ``1/c`` and ``1/bc_t``.  ``verbatim``
    uses ``c/s`` and ``bc_t/bn`` and weights the first term by ``lam``.
    """
    if mode not in OBJECTIVE_MODES:
        raise ValueError(f"unknown objective mode {mode!r}")
    ps = np.asarray(ps, dtype=float)
    pb = np.asarray(pb, dtype=float)
    if len(ps) != c or len(pb) != bc_t:
        raise ValueError("proportion vectors disagree with class counts")
    if mode == "normalized":
        t_s, t_b, lam = 1.0 / c, (1.0 / bc_t if bc_t else 0.0), 1.0
    else:
        t_s, t_b = c / s, (bc_t / bn if bn else 0.0)
    first = np.abs(ps - t_s).sum() / c
    second = np.abs(pb - t_b).sum() / bc_t if bc_t else 0.0
    return float(lam * first + second)


def balance_state(selected_classes, buffer_counts, n_classes: int) -> BalanceState:
    """Normalized objective of a coreset, judged by what the buffer looks like once it is in.

    Both terms are taken over the merged buffer + coreset pool: the first over
    all ``n_classes`` classes (so classes nobody holds count as missing), the
    second over the classes present.  Scoring the coreset on its own would
    reward a batch-local 50/50 split even when the buffer is 90/10, which is
    exactly what global balancing is meant to avoid.
    """
    sel = np.bincount(np.asarray(selected_classes, dtype=int), minlength=n_classes)[:n_classes]
    buf = np.zeros(n_classes)
    for k, v in dict(buffer_counts).items():
        if k < n_classes:
            buf[k] += v
    after = buf + sel
    present = after > 0
    merged = proportions(after)
    score = imbalance_objective(merged, merged[present], n_classes, max(int(sel.sum()), 1),
                                int(present.sum()), int(after.sum()))
    return BalanceState(proportions(sel), merged, 1.0 / n_classes, score)


def balanced_select(features, pred_classes, buffer_counts, target_size: int,
                    n_classes: int | None = None) -> tuple[np.ndarray, BalanceState]:
    """Pick ``target_size`` candidates, always topping up the most under-represented class.

    Args:
        features: (n, d) candidate features.
        pred_classes: (n,) pseudo-labels of the candidates.
        buffer_counts: mapping class -> count currently in the buffer.
        target_size: number of samples to pick.
        n_classes: size of the class universe (defaults to max label + 1).

    Returns:
        (indices into the candidates in pick order, BalanceState)
    """
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(pred_classes, dtype=int)
    buffer_counts = dict(buffer_counts)
    if n_classes is None:
        n_classes = int(max([*y.tolist(), *buffer_counts.keys(), 0])) + 1
    queues = {}
    for k in np.unique(y):
        members = np.flatnonzero(y == k)
        queues[int(k)] = list(members[farthest_point_order(X[members])])
    held = np.zeros(n_classes)
    for k, v in buffer_counts.items():
        if k < n_classes:
            held[k] += v
    target = 1.0 / n_classes
    picks = []
    while len(picks) < target_size and any(queues.values()):
        total = held.sum()
        share = held / total if total > 0 else np.zeros(n_classes)
        deficit = target - share
        k = min((k for k, q in queues.items() if q), key=lambda k: (-deficit[k], k))
        picks.append(int(queues[k].pop(0)))
        held[k] += 1
    picks = np.asarray(picks, dtype=int)
    return picks, balance_state(y[picks], buffer_counts, n_classes)
