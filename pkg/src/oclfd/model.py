"""Dense softmax classifier with hand-written backprop, SGD and MC dropout.

The network is ``d -> hidden... -> c`` with ReLU hidden units and inverted
dropout on every hidden activation.  Parameters live in a :class:`ModelState`;
every public function treats the state as a value and returns a new one on
update, so callers can keep snapshots around for free.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .losses import focal_loss_batch, negative_loss_batch

CHECKPOINT_VERSION = 1
VARIANCE_REDUCTIONS = ("argmax", "max", "mean")


class InputShapeError(ValueError):
    """Feature vector or matrix does not match the configured dimension."""


class NumericalDivergenceError(FloatingPointError):
    def __init__(self, batch_index: int, message: str = "non-finite gradient"):
        super().__init__(f"{message} (batch {batch_index})")
        self.batch_index = batch_index


@dataclass
class ModelState:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0
    learning_rate: float = 1e-4
    rng_seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("need one weight matrix per layer transition")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "ModelState":
        return replace(self, layer_dims=list(self.layer_dims),
                       weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases])

    def digest(self) -> str:
        """SHA-256 over all parameter bytes; equal digests mean bit-identical weights."""
        h = hashlib.sha256()
        h.update(np.asarray(self.layer_dims, dtype=np.int64).tobytes())
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()


@dataclass
class PredictionOutput:
    probabilities: np.ndarray
    predicted_class: int
    mc_variance: float
    mc_mean: np.ndarray


@dataclass
class TrainingSet:
    """Samples entering one gradient step, with per-sample weights.

    ``negative[i]`` marks a "not labels[i]" target trained with the
    complement loss instead of the focal loss.
    """

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = None
    negative: np.ndarray = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        n = self.labels.shape[0]
        if self.features.shape[0] != n:
            if n == 0:
                self.features = self.features.reshape(0, -1)
            else:
                raise InputShapeError("features and labels disagree on sample count")
        self.weights = (np.ones(n) if self.weights is None
                        else np.asarray(self.weights, dtype=float).reshape(n))
        self.negative = (np.zeros(n, dtype=bool) if self.negative is None
                         else np.asarray(self.negative, dtype=bool).reshape(n))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @classmethod
    def empty(cls, dim: int) -> "TrainingSet":
        return cls(np.zeros((0, dim)), np.zeros(0, dtype=int))

    def concat(self, other: "TrainingSet") -> "TrainingSet":
        return TrainingSet(np.vstack([self.features, other.features]),
                           np.concatenate([self.labels, other.labels]),
                           np.concatenate([self.weights, other.weights]),
                           np.concatenate([self.negative, other.negative]))

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.features[idx], self.labels[idx], self.weights[idx], self.negative[idx])


@dataclass
class LossConfig:
    """Loss shape shared by the trainer; ``alpha`` weights the pseudo-labeled term."""

    gamma: float = 2.0
    alpha: float = 0.7
    negative_label_mode: str = "complement"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def _uniform_init(rng: np.random.Generator, fan_out: int, fan_in: int, scale: float):
    bound = scale / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = rng.uniform(-bound, bound, size=fan_out)
    return w, b


def init_model(layer_dims, *, dropout_rate: float = 0.0, learning_rate: float = 1e-4,
               seed: int = 0, init_scale: float = 1.0) -> ModelState:
    """Build a model with weights uniform in ``[-s/sqrt(fan_in), s/sqrt(fan_in)]``."""
    dims = [int(v) for v in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"bad layer_dims {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w, b = _uniform_init(rng, fan_out, fan_in, init_scale)
        weights.append(w)
        biases.append(b)
    return ModelState(dims, weights, biases, dropout_rate=dropout_rate,
                      learning_rate=learning_rate, rng_seed=seed, init_scale=init_scale)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(model: ModelState, x) -> np.ndarray:
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputShapeError(f"expected feature dim {model.input_dim}, got shape {np.shape(x)}")
    return X


def _draw_masks(model: ModelState, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    keep = 1.0 - model.dropout_rate
    return [(rng.random((n, h)) < keep) / keep for h in model.layer_dims[1:-1]]


def _forward_cache(model: ModelState, X: np.ndarray, masks):
    """Forward pass keeping what backprop needs: inputs to each layer and ReLU gates."""
    inputs, gates = [], []
    a = X
    n_layers = len(model.weights)
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        if i == n_layers - 1:
            return softmax(z), inputs, gates
        gate = z > 0
        a = np.where(gate, z, 0.0)
        if masks is not None:
            a = a * masks[i]
            gate = gate * masks[i]
        gates.append(gate)


def forward_batch(model: ModelState, X, dropout_on: bool = False,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    X = _as_batch(model, X)
    masks = None
    if dropout_on and model.dropout_rate > 0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        masks = _draw_masks(model, X.shape[0], rng)
    probs, _, _ = _forward_cache(model, X, masks)
    return probs


def forward(model: ModelState, x, dropout_on: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probabilities for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputShapeError("forward takes a single feature vector; use forward_batch")
    return forward_batch(model, x, dropout_on, rng)[0]


def mc_predict_batch(model: ModelState, X, passes: int, rng: np.random.Generator,
                     reduction: str = "argmax") -> tuple[np.ndarray, np.ndarray]:
    """Run ``passes`` dropout forwards over a batch.

    Returns:
        (mc_mean, mc_variance): (n, c) mean probabilities and the (n,) scalar
        population variance, reduced over classes per ``reduction``.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    if reduction not in VARIANCE_REDUCTIONS:
        raise ValueError(f"unknown variance reduction {reduction!r}")
    X = _as_batch(model, X)
    runs = np.stack([forward_batch(model, X, True, rng) for _ in range(passes)])
    mean = runs.mean(axis=0)
    var = runs.var(axis=0)
    if model.dropout_rate == 0:
        var = np.zeros_like(var)
    if reduction == "argmax":
        scalar = var[np.arange(X.shape[0]), mean.argmax(axis=1)]
    elif reduction == "max":
        scalar = var.max(axis=1)
    else:
        scalar = var.mean(axis=1)
    return mean, scalar


def mc_predict(model: ModelState, x, passes: int, rng: np.random.Generator,
               reduction: str = "argmax") -> PredictionOutput:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputShapeError("mc_predict takes a single feature vector")
    mean, var = mc_predict_batch(model, x, passes, rng, reduction)
    return PredictionOutput(probabilities=mean[0].copy(), predicted_class=int(mean[0].argmax()),
                            mc_variance=float(var[0]), mc_mean=mean[0])


def _set_grad(model, ts: TrainingSet, loss_cfg: LossConfig, masks):
    """Summed per-sample loss and logit gradients for one training set (unnormalized)."""
    probs, inputs, gates = _forward_cache(model, ts.features, masks)
    pos = ~ts.negative
    losses = np.zeros(len(ts))
    g = np.zeros_like(probs)
    if pos.any():
        l, gr = focal_loss_batch(probs[pos], ts.labels[pos], loss_cfg.gamma, ts.weights[pos])
        losses[pos], g[pos] = l, gr
    if ts.negative.any():
        neg = ts.negative
        l, gr = negative_loss_batch(probs[neg], ts.labels[neg], loss_cfg.gamma, 1.0,
                                    loss_cfg.negative_label_mode)
        losses[neg] = l * ts.weights[neg]
        g[neg] = gr * ts.weights[neg][:, None]
    return losses, g, inputs, gates


def _backprop(model: ModelState, g: np.ndarray, inputs, gates):
    grads_w, grads_b = [], []
    delta = g
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w.append(delta.T @ inputs[i])
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i]) * gates[i - 1]
    return grads_w[::-1], grads_b[::-1]


def loss_and_gradients(model: ModelState, labeled: TrainingSet | None, pseudo: TrainingSet | None,
                       loss_cfg: LossConfig, rng: np.random.Generator | None = None):
    """Objective ``mean_labeled + mean_pseudo`` and its parameter gradients (A + B).

    Labeled samples carry their own weights (normally 1); pseudo-labeled ones
    are additionally scaled by ``loss_cfg.alpha``.  Each term is averaged over
    its own sample count.
    """
    dim = model.input_dim
    labeled = labeled if labeled is not None else TrainingSet.empty(dim)
    pseudo = pseudo if pseudo is not None else TrainingSet.empty(dim)
    if len(labeled) == 0 and len(pseudo) == 0:
        raise ValueError("labeled and pseudo sets are both empty")
    for ts in (labeled, pseudo):
        if len(ts) and ts.features.shape[1] != dim:
            raise InputShapeError(f"expected feature dim {dim}, got {ts.features.shape[1]}")
        if len(ts) and ts.labels.max() >= model.n_classes:
            raise ValueError("label outside current class range")
    pseudo = TrainingSet(pseudo.features, pseudo.labels, pseudo.weights * loss_cfg.alpha, pseudo.negative)
    both = labeled.concat(pseudo)
    masks = None
    if model.dropout_rate > 0:
        if rng is None:
            raise ValueError("training with dropout needs an rng")
        masks = _draw_masks(model, len(both), rng)
    losses, g, inputs, gates = _set_grad(model, both, loss_cfg, masks)
    n_lab = len(labeled)
    scale = np.empty(len(both))
    scale[:n_lab] = 1.0 / n_lab if n_lab else 0.0
    scale[n_lab:] = 1.0 / len(pseudo) if len(pseudo) else 0.0
    loss = float((losses * scale).sum())
    grads_w, grads_b = _backprop(model, g * scale[:, None], inputs, gates)
    return loss, grads_w, grads_b


def sgd_step(model: ModelState, labeled: TrainingSet | None, pseudo: TrainingSet | None,
             loss_cfg: LossConfig, rng: np.random.Generator | None = None,
             batch_index: int = 0) -> tuple[ModelState, float]:
    """One plain SGD update ``theta <- theta - lr * (A + B)``; returns the new state and loss."""
    loss, gw, gb = loss_and_gradients(model, labeled, pseudo, loss_cfg, rng)
    if not (np.isfinite(loss) and all(np.isfinite(g).all() for g in gw + gb)):
        raise NumericalDivergenceError(batch_index)
    new = model.copy()
    lr = model.learning_rate
    for i in range(len(gw)):
        new.weights[i] -= lr * gw[i]
        new.biases[i] -= lr * gb[i]
    if not all(np.isfinite(a).all() for a in new.weights + new.biases):
        raise NumericalDivergenceError(batch_index, "non-finite parameters after update")
    return new, loss


def grow_head(model: ModelState, new_class_count: int) -> ModelState:
    """Append output units; existing rows are kept bit-for-bit."""
    old = model.n_classes
    if new_class_count <= old:
        raise ValueError(f"cannot grow head from {old} to {new_class_count}")
    fan_in = model.layer_dims[-2]
    rng = np.random.default_rng([model.rng_seed, new_class_count])
    w_new, b_new = _uniform_init(rng, new_class_count - old, fan_in, model.init_scale)
    new = model.copy()
    new.weights[-1] = np.vstack([model.weights[-1], w_new])
    new.biases[-1] = np.concatenate([model.biases[-1], b_new])
    new.layer_dims[-1] = new_class_count
    return new


def model_to_dict(model: ModelState) -> dict:
    return {
        "format": "oclfd-model",
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(model.layer_dims),
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "dropout_rate": model.dropout_rate,
        "learning_rate": model.learning_rate,
        "rng_seed": model.rng_seed,
        "init_scale": model.init_scale,
    }


def model_from_dict(d: dict) -> ModelState:
    if d.get("format") != "oclfd-model" or d.get("version") != CHECKPOINT_VERSION:
        raise ValueError("not a version-1 oclfd model checkpoint")
    dims = [int(v) for v in d["layer_dims"]]
    weights = [np.asarray(w, dtype=float).reshape(fo, fi)
               for w, fi, fo in zip(d["weights"], dims[:-1], dims[1:])]
    biases = [np.asarray(b, dtype=float) for b in d["biases"]]
    return ModelState(dims, weights, biases, dropout_rate=d["dropout_rate"],
                      learning_rate=d["learning_rate"], rng_seed=d["rng_seed"],
                      init_scale=d.get("init_scale", 1.0))


def save_checkpoint(model: ModelState, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_checkpoint(path) -> ModelState:
    return model_from_dict(json.loads(Path(path).read_text()))
