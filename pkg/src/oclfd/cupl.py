"""Pseudo-labels gated by confidence and MC-dropout uncertainty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import negative_loss_batch, negative_loss_term  # noqa: F401
from .model import ModelState, mc_predict_batch

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class CuplConfig:
    """Gate thresholds.

    ``kappa`` is on the raw probability-variance scale (at most 0.25).
    ``negative_any_class`` switches the negative gate from the argmax class
    to the least likely class.
    """

    tau_p: float = 0.95
    tau_n: float = 0.45
    kappa: float = 0.02
    mc_passes: int = 10
    variance_reduction: str = "argmax"
    negative_any_class: bool = False

    def __post_init__(self):
        if not 0 < self.tau_p <= 1:
            raise ValueError("tau_p must be in (0, 1]")
        if not 0 <= self.tau_n < 1:
            raise ValueError("tau_n must be in [0, 1)")
        if self.tau_n >= self.tau_p:
            raise ValueError("tau_n must be below tau_p")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.mc_passes < 1:
            raise ValueError("mc_passes must be >= 1")


@dataclass
class PseudoLabeledSample:
    features: np.ndarray
    pseudo_label: int
    polarity: str
    confidence: float
    uncertainty: float
    accepted: bool


@dataclass
class GateResult:
    """Vectorized gate output for a whole batch."""

    labels: np.ndarray
    confidence: np.ndarray
    uncertainty: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    @property
    def accepted(self) -> np.ndarray:
        return self.positive | self.negative


def gate(mc_mean: np.ndarray, mc_variance: np.ndarray, cfg: CuplConfig) -> GateResult:
    """Apply the confidence/uncertainty gate to MC-dropout statistics.

    A positive label needs ``p >= tau_p`` and a negative one ``p <= tau_n``;
    both also need ``variance <= kappa``.
    """
    mc_mean = np.atleast_2d(mc_mean)
    var = np.asarray(mc_variance, dtype=float).reshape(-1)
    top = mc_mean.argmax(axis=1)
    conf = mc_mean.max(axis=1)
    certain = var <= cfg.kappa
    positive = certain & (conf >= cfg.tau_p)
    labels = top.copy()
    neg_conf = conf
    if cfg.negative_any_class:
        labels = np.where(positive, top, mc_mean.argmin(axis=1))
        neg_conf = np.where(positive, conf, mc_mean.min(axis=1))
    negative = certain & ~positive & (neg_conf <= cfg.tau_n)
    confidence = np.where(negative, neg_conf, conf)
    return GateResult(labels, confidence, var, positive, negative)


def pseudo_label(batch, model: ModelState, cfg: CuplConfig,
                 rng: np.random.Generator) -> list[PseudoLabeledSample]:
    """Pseudo-label every sample; rejected ones come back with ``accepted=False``."""
    X = np.atleast_2d(np.asarray(batch, dtype=float))
    if model.n_classes < 2:
        raise ValueError("pseudo-labeling needs at least two output classes")
    mean, var = mc_predict_batch(model, X, cfg.mc_passes, rng, cfg.variance_reduction)
    g = gate(mean, var, cfg)
    return [PseudoLabeledSample(X[i], int(g.labels[i]),
                                NEGATIVE if g.negative[i] else POSITIVE,
                                float(g.confidence[i]), float(g.uncertainty[i]),
                                bool(g.accepted[i]))
            for i in range(X.shape[0])]
