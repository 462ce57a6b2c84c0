"""Focal loss and the complement loss for negative pseudo-labels.

Both functions come in a scalar form (one probability vector) and a batched
form used by the trainer.  Gradients are taken with respect to the logits,
i.e. they already include the softmax Jacobian.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12

NEGATIVE_MODES = ("complement", "ignore")


def _check_label(label: int, n_classes: int) -> None:
    if not 0 <= int(label) < n_classes:
        raise ValueError(f"label {label} outside [0, {n_classes})")


def focal_loss_batch(probs: np.ndarray, labels: np.ndarray, gamma: float,
                     weights: np.ndarray | float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample focal loss ``w * (1 - p_y)^gamma * -ln(p_y)``.

    Args:
        probs: (n, c) softmax outputs.
        labels: (n,) integer targets.
        gamma: focusing exponent, >= 0.
        weights: scalar or (n,) per-sample weights.

    Returns:
        (losses, grad_logits) with shapes (n,) and (n, c).
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, c = probs.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels outside [0, {c})")
    w = np.broadcast_to(np.asarray(weights, dtype=float), (n,))
    rows = np.arange(n)
    p = np.clip(probs[rows, labels], PROB_FLOOR, 1.0)
    q = 1.0 - p
    log_p = np.log(p)
    mod = q ** gamma
    losses = -w * mod * log_p
    # d/dp of the per-sample loss, multiplied by p (softmax chain rule)
    if gamma == 0:
        dmod_term = np.zeros_like(p)
    else:
        # gamma * p * (1-p)^(gamma-1) * ln p, which vanishes at p == 1
        with np.errstate(divide="ignore", invalid="ignore"):
            dmod_term = np.where(q > 0, gamma * p * q ** (gamma - 1.0) * log_p, 0.0)
    coef = -w * (mod - dmod_term)
    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0
    grad = coef[:, None] * (onehot - probs)
    return losses, grad


def focal_loss(probabilities, label: int, gamma: float, weight: float = 1.0) -> tuple[float, np.ndarray]:
    """Focal loss of a single probability vector and its gradient w.r.t. logits."""
    probs = np.asarray(probabilities, dtype=float)
    _check_label(label, probs.shape[-1])
    losses, grad = focal_loss_batch(probs[None, :], np.array([label]), gamma, weight)
    return float(losses[0]), grad[0]


def negative_loss_batch(probs: np.ndarray, negated: np.ndarray, gamma: float, alpha: float,
                        mode: str = "complement") -> tuple[np.ndarray, np.ndarray]:
    """Complement loss ``-alpha * p_k^gamma * ln(1 - p_k)`` for "not class k" targets.

    In ``ignore`` mode every term and gradient is exactly zero.
    """
    if mode not in NEGATIVE_MODES:
        raise ValueError(f"unknown negative_label_mode {mode!r}")
    probs = np.asarray(probs, dtype=float)
    negated = np.asarray(negated, dtype=int)
    n, c = probs.shape
    if mode == "ignore":
        return np.zeros(n), np.zeros((n, c))
    if negated.size and (negated.min() < 0 or negated.max() >= c):
        raise ValueError(f"negated classes outside [0, {c})")
    rows = np.arange(n)
    pk = np.clip(probs[rows, negated], 0.0, 1.0 - PROB_FLOOR)
    log_q = np.log1p(-pk)
    mod = pk ** gamma
    losses = -alpha * mod * log_q
    # dL/dp_k * p_k
    coef = -alpha * (gamma * mod * log_q - mod * pk / (1.0 - pk))
    onehot = np.zeros_like(probs)
    onehot[rows, negated] = 1.0
    grad = coef[:, None] * (onehot - probs)
    return losses, grad


def negative_loss_term(probabilities, negated_class: int, gamma: float, alpha: float,
                       mode: str = "complement") -> tuple[float, np.ndarray]:
    probs = np.asarray(probabilities, dtype=float)
    _check_label(negated_class, probs.shape[-1])
    losses, grad = negative_loss_batch(probs[None, :], np.array([negated_class]), gamma, alpha, mode)
    return float(losses[0]), grad[0]
