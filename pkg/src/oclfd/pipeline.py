"""Streaming scenarios and the online agent.

Each arriving batch is handled test-then-train: the agent first predicts the
unlabeled part with the current parameters, then pseudo-labels it, filters
and thins the confident part into a coreset, updates the model on labeled
data + coreset + replay, and finally stores what it trained on.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import cupl, gbt, rcs
from .buffer import GROUND_TRUTH, PSEUDO, BufferEntry, ReplayBuffer
from .data import Dataset, Standardizer
from .model import (LossConfig, ModelState, TrainingSet, forward_batch, grow_head, init_model,
                    mc_predict_batch, sgd_step)

SCENARIO_MODES = ("class-incremental", "variable-condition")
CL_TYPES = {"nc": "class-incremental", "vc": "variable-condition"}


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    mode: str = "class-incremental"
    num_tasks: int = 1
    labeled_fraction: float = 0.05
    batch_size: int = 100
    init_normal_count: int = 1000
    noise_schedule: list | None = None
    noise_step: float = 0.1

    def __post_init__(self):
        if self.mode in CL_TYPES:
            self.mode = CL_TYPES[self.mode]
        if self.mode not in SCENARIO_MODES:
            raise ValueError(f"unknown scenario mode {self.mode!r}")
        if self.num_tasks < 1:
            raise ValueError("num_tasks must be >= 1")
        if not 0 <= self.labeled_fraction <= 1:
            raise ValueError("labeled_fraction must be in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AgentView:
    """What the agent is allowed to see of a batch."""

    step: int
    labeled_features: np.ndarray
    labeled_labels: np.ndarray
    unlabeled_features: np.ndarray
    condition_id: int = 0


@dataclass
class StreamBatch:
    step: int
    labeled_features: np.ndarray
    labeled_labels: np.ndarray
    unlabeled_features: np.ndarray
    condition_id: int
    task_id: int
    true_labels_hidden: np.ndarray

    def view(self) -> AgentView:
        return AgentView(self.step, self.labeled_features, self.labeled_labels,
                         self.unlabeled_features, self.condition_id)


@dataclass
class Scenario:
    init_features: np.ndarray
    batches: list
    task_features: list
    task_labels: list
    class_count: int
    standardizer: Standardizer


def _split_init(dataset: Dataset, cfg: ScenarioConfig, rng, pool_mask=None):
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    normals = np.flatnonzero(dataset.labels == 0)
    if pool_mask is not None:
        normals = normals[pool_mask[normals]]
    normals = rng.permutation(normals)
    n_init = min(cfg.init_normal_count, len(normals) // 2)
    if n_init < 1:
        raise ValueError("not enough normal samples to initialize the model")
    init_idx = np.sort(normals[:n_init])
    rest = np.setdiff1d(np.arange(len(dataset)), init_idx)
    std = Standardizer.fit(dataset.features[init_idx])
    return std.transform(dataset.features[init_idx]), rest, std


def _make_batches(features, labels, order, cfg, rng, step0, task_id, cond_of_step):
    out = []
    for chunk in np.array_split(order, max(1, math.ceil(len(order) / cfg.batch_size))):
        if chunk.size == 0:
            continue
        step = step0 + len(out)
        n_lab = int(round(cfg.labeled_fraction * len(chunk)))
        lab_mask = np.zeros(len(chunk), dtype=bool)
        lab_mask[rng.choice(len(chunk), size=n_lab, replace=False)] = True
        X = features[chunk]
        y = labels[chunk]
        out.append(StreamBatch(step, X[lab_mask], y[lab_mask], X[~lab_mask],
                               int(cond_of_step(step)), task_id, y[~lab_mask]))
    return out


def _fault_tasks(fault_classes, num_tasks):
    """Task index for every fault class; task 0 carries normals only when there is room."""
    if num_tasks == 1:
        return {f: [0] for f in fault_classes}
    slots = num_tasks - 1
    F = len(fault_classes)
    if slots >= F:
        plan = {f: [] for f in fault_classes}
        for t in range(slots):
            plan[fault_classes[t % F]].append(t + 1)
        return plan
    return {f: [1 + i * slots // F] for i, f in enumerate(fault_classes)}


def make_class_incremental(dataset: Dataset, cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Normals spread evenly over tasks; fault class k debuts in its own task."""
    init, rest, std = _split_init(dataset, cfg, rng)
    X = std.transform(dataset.features)
    y = dataset.labels
    normals = rng.permutation(rest[y[rest] == 0])
    per_task = [list(part) for part in np.array_split(normals, cfg.num_tasks)]
    faults = sorted(int(k) for k in np.unique(y[rest]) if k != 0)
    for f, tasks in _fault_tasks(faults, cfg.num_tasks).items():
        members = rng.permutation(rest[y[rest] == f])
        for t, part in zip(tasks, np.array_split(members, len(tasks))):
            per_task[t].extend(part)
    batches, tf, tl = [], [], []
    for t, idx in enumerate(per_task):
        idx = rng.permutation(np.asarray(idx, dtype=int))
        tf.append(X[idx])
        tl.append(y[idx])
        batches += _make_batches(X, y, idx, cfg, rng, len(batches), t, lambda s: 0)
    return Scenario(init, batches, tf, tl, int(y.max()) + 1, std)


def default_noise_schedule(num_steps: int, num_tasks: int, noise_step: float) -> list:
    bounds = np.linspace(0, num_steps, num_tasks + 1).round().astype(int)
    return [{"start": int(bounds[k]), "sigma": k * noise_step} for k in range(num_tasks)]


def _range_of(schedule, step) -> int:
    r = 0
    for i, entry in enumerate(schedule):
        if step >= entry["start"]:
            r = i
    return r


def make_variable_condition(dataset: Dataset, cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Stationary class mix whose inputs drift.

    Single-condition data gets additive Gaussian noise whose sigma follows the
    schedule; each schedule range is one task and its index is the condition
    id.  Multi-condition data is replayed condition by condition instead.
    """
    multi = len(np.unique(dataset.conditions)) > 1
    pool = (dataset.conditions == dataset.conditions.min()) if multi else None
    init, rest, std = _split_init(dataset, cfg, rng, pool)
    X = std.transform(dataset.features)
    y = dataset.labels
    if multi:
        order = np.concatenate([rng.permutation(rest[dataset.conditions[rest] == c])
                                for c in np.unique(dataset.conditions[rest])])
    else:
        order = rng.permutation(rest)
    n_steps = max(1, math.ceil(len(order) / cfg.batch_size))
    schedule = cfg.noise_schedule
    if schedule is None:
        schedule = ([{"start": 0, "sigma": 0.0}] if multi
                    else default_noise_schedule(n_steps, cfg.num_tasks, cfg.noise_step))
    schedule = sorted((dict(e) for e in schedule), key=lambda e: e["start"])
    if not schedule:
        raise ValueError("noise_schedule must not be empty")
    chunks = [c for c in np.array_split(order, n_steps) if c.size]
    Xn = X.copy()
    batches = []
    cond = dataset.conditions
    for step, chunk in enumerate(chunks):
        r = _range_of(schedule, step)
        sigma = float(schedule[r].get("sigma", 0.0))
        if sigma > 0:
            Xn[chunk] = X[chunk] + sigma * rng.standard_normal((len(chunk), X.shape[1]))
        cid = int(np.bincount(cond[chunk]).argmax()) if multi else r
        task = int(step * cfg.num_tasks // len(chunks)) if multi else r
        batches += _make_batches(Xn, y, chunk, cfg, rng, step, task, lambda s, c=cid: c)
    present = sorted({b.task_id for b in batches})
    for b in batches:
        b.task_id = present.index(b.task_id)
    tf, tl = [], []
    for t in range(len(present)):
        idx = np.concatenate([c for c, b in zip(chunks, batches) if b.task_id == t])
        tf.append(Xn[idx])
        tl.append(y[idx])
    return Scenario(init, batches, tf, tl, int(y.max()) + 1, std)


def make_scenario(dataset: Dataset, cfg: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    if cfg.mode == "class-incremental":
        return make_class_incremental(dataset, cfg, rng)
    return make_variable_condition(dataset, cfg, rng)


# --------------------------------------------------------------------------
# agent
# --------------------------------------------------------------------------

@dataclass
class ModelConfig:
    hidden: list = field(default_factory=lambda: [64, 32])
    dropout_rate: float = 0.2
    learning_rate: float = 1e-4
    init_scale: float = 1.0


@dataclass
class BufferConfig:
    capacity: int = 2000
    policy: str = "balanced"
    replay: str = "stratified"


@dataclass
class TrainConfig:
    epochs_per_step: int = 1
    batch_size: int = 100
    replay_size: int = 100
    init_epochs: int = 1
    initial_classes: int = 2


@dataclass
class AgentConfig:
    """Switches and hyperparameters of one agent.

    ``use_cupl=False`` trains on ground truth only.  ``pseudo_all`` accepts
    every argmax pseudo-label without gating.  ``use_rcs`` and ``use_gbt``
    toggle redundancy filtering and balanced composition.
    """

    name: str = "SRTFD"
    use_cupl: bool = True
    use_rcs: bool = True
    use_gbt: bool = True
    pseudo_all: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    rcs: rcs.RcsConfig = field(default_factory=rcs.RcsConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    cupl: cupl.CuplConfig = field(default_factory=cupl.CuplConfig)

    def to_json(self) -> dict:
        return asdict(self)


AGENT_PRESETS = {
    "SRTFD": {},
    "ER": {"use_cupl": False, "use_rcs": False, "use_gbt": False,
           "buffer": {"policy": "reservoir", "replay": "uniform"}, "loss": {"gamma": 0.0}},
    "ER-pseudo": {"use_cupl": True, "pseudo_all": True, "use_rcs": False, "use_gbt": False,
                  "buffer": {"policy": "reservoir", "replay": "uniform"}, "loss": {"gamma": 0.0}},
    "SRTFD-noCUPL": {"use_cupl": False},
    "SRTFD-noRCS": {"use_rcs": False},
    "SRTFD-noGBT": {"use_gbt": False},
}

# Training budget for the small synthetic streams.  The library default
# (learning rate 1e-4, one epoch per step) barely moves a freshly initialised
# network within a 20-batch stream.
DESK_OVERRIDES = {
    "model": {"learning_rate": 0.3},
    "train": {"epochs_per_step": 5, "init_epochs": 5},
}

_SECTIONS = {"model": ModelConfig, "buffer": BufferConfig, "train": TrainConfig,
             "rcs": rcs.RcsConfig, "loss": LossConfig, "cupl": cupl.CuplConfig}


def build_agent_config(name: str = "SRTFD", overrides: dict | None = None) -> AgentConfig:
    """Preset for ``name`` with nested ``overrides`` applied on top (config-file layout)."""
    if name not in AGENT_PRESETS:
        raise ValueError(f"unknown agent {name!r}; choose from {sorted(AGENT_PRESETS)}")
    merged: dict = {}
    for layer in (AGENT_PRESETS[name], overrides or {}):
        for key, val in layer.items():
            if key in _SECTIONS:
                if not isinstance(val, dict):
                    raise ValueError(f"config section {key!r} must be a mapping")
                merged.setdefault(key, {}).update(val)
            else:
                merged[key] = val
    kwargs = {"name": name}
    for key, val in merged.items():
        if key in _SECTIONS:
            try:
                kwargs[key] = _SECTIONS[key](**val)
            except TypeError as exc:
                raise ValueError(f"bad field in config section {key!r}: {exc}") from None
        elif key in AgentConfig.__dataclass_fields__:
            kwargs[key] = val
        else:
            raise ValueError(f"unknown config key {key!r}")
    return AgentConfig(**kwargs)


@dataclass
class StepReport:
    step: int
    condition_id: int
    n_labeled: int
    n_unlabeled: int
    n_accepted_positive: int = 0
    n_accepted_negative: int = 0
    n_rejected: int = 0
    n_clusters: int = 0
    n_dropped_clusters: int = 0
    n_surviving: int = 0
    coreset_positive: int = 0
    coreset_negative: int = 0
    n_replay: int = 0
    sgd_steps: int = 0
    updated: bool = False
    skip_reason: str = ""
    loss: float = float("nan")
    n_classes: int = 0
    digest_before: str = ""
    digest_after: str = ""
    balance: dict | None = None
    balance_random: float | None = None
    audit: dict | None = None
    prediction_time: float = 0.0
    selection_time: float = 0.0
    update_time: float = 0.0

    TIMING_FIELDS = ("prediction_time", "selection_time", "update_time")

    @property
    def trained_unlabeled(self) -> int:
        return self.coreset_positive + self.coreset_negative

    @property
    def training_time(self) -> float:
        return self.selection_time + self.update_time

    def to_json(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        d["trained_unlabeled"] = self.trained_unlabeled
        if math.isnan(d["loss"]):
            d["loss"] = None
        if not include_timing:
            for k in self.TIMING_FIELDS:
                d.pop(k)
        return d


class DuplicateCoresetError(RuntimeError):
    pass


class Agent:
    """Online learner holding the model, the replay buffer and the coreset ledger."""

    def __init__(self, cfg: AgentConfig, input_dim: int, seed: int = 0, clock=time.perf_counter,
                 audit: bool = False, random_baseline_draws: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.clock = clock
        self.audit = audit
        self.random_baseline_draws = random_baseline_draws
        self.rng = np.random.default_rng([seed, 1])
        m = cfg.model
        dims = [input_dim, *m.hidden, cfg.train.initial_classes]
        self.model: ModelState = init_model(dims, dropout_rate=m.dropout_rate,
                                            learning_rate=m.learning_rate, seed=seed,
                                            init_scale=m.init_scale)
        b = cfg.buffer
        self.buffer = ReplayBuffer(b.capacity, input_dim, policy=b.policy, replay=b.replay,
                                   seed=seed + 2)
        self.ledger: set[int] = set()
        self.next_uid = 0
        self.step_count = 0

    def _uids(self, n: int) -> np.ndarray:
        out = np.arange(self.next_uid, self.next_uid + n)
        self.next_uid += n
        return out

    def _step_rng(self, model_digest: str, *arrays) -> np.random.Generator:
        h = hashlib.sha256(model_digest.encode())
        for a in arrays:
            h.update(np.ascontiguousarray(a).tobytes())
        for e in self.buffer.entries():
            h.update(e.uid.to_bytes(8, "little"))
        return np.random.default_rng([self.seed, int.from_bytes(h.digest()[:8], "little")])

    def _ensure_classes(self, labels):
        if len(labels) and int(np.max(labels)) >= self.model.n_classes:
            self.model = grow_head(self.model, int(np.max(labels)) + 1)

    def _train(self, new: TrainingSet, pseudo_mask: np.ndarray, epochs: int) -> tuple[float, int, int]:
        tc = self.cfg.train
        losses, steps, n_replay = [], 0, 0
        for epoch in range(epochs):
            order = self.rng.permutation(len(new))
            n_mb = max(1, math.ceil(len(new) / tc.batch_size))
            for mb in np.array_split(order, n_mb):
                replay = self.buffer.replay_batch(min(tc.replay_size, len(mb)) if tc.replay_size else 0,
                                                  self.rng)
                n_replay += len(replay)
                lab = new.subset(mb[~pseudo_mask[mb]])
                if replay:
                    lab = lab.concat(TrainingSet(np.stack([e.features for e in replay]),
                                                 np.array([e.label for e in replay])))
                ps = new.subset(mb[pseudo_mask[mb]])
                self.model, loss = sgd_step(self.model, lab, ps, self.cfg.loss, self.rng,
                                            batch_index=steps)
                losses.append(loss)
                steps += 1
        return float(np.mean(losses)), steps, n_replay

    def initialize(self, init_features: np.ndarray) -> None:
        """Pretrain on normal-only data and seed the buffer with it."""
        X = np.asarray(init_features, dtype=float)
        y = np.zeros(len(X), dtype=int)
        uids = self._uids(len(X))
        if self.cfg.train.init_epochs > 0 and len(X):
            self._train(TrainingSet(X, y), np.zeros(len(X), dtype=bool), self.cfg.train.init_epochs)
        self.buffer.insert(BufferEntry(int(u), X[i], 0, GROUND_TRUTH, -1) for i, u in enumerate(uids))

    def predict(self, X: np.ndarray) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=int)
        return forward_batch(self.model, X).argmax(axis=1)

    def run_step(self, view: AgentView) -> tuple[np.ndarray, StepReport]:
        cfg = self.cfg
        Xu = np.asarray(view.unlabeled_features, dtype=float).reshape(-1, self.model.input_dim)
        Xl = np.asarray(view.labeled_features, dtype=float).reshape(-1, self.model.input_dim)
        yl = np.asarray(view.labeled_labels, dtype=int)
        rep = StepReport(view.step, view.condition_id, len(Xl), len(Xu))
        rep.digest_before = self.model.digest()
        # Randomness is keyed on what the step sees, so replaying an identical
        # batch against an identical model and buffer reproduces the step.
        self.rng = self._step_rng(rep.digest_before, Xu, Xl, yl)

        # 1. prequential prediction with the previous parameters
        t0 = self.clock()
        if len(Xu):
            mean, var = mc_predict_batch(self.model, Xu, cfg.cupl.mc_passes, self.rng,
                                         cfg.cupl.variance_reduction)
            preds = mean.argmax(axis=1)
        else:
            mean, var, preds = np.zeros((0, self.model.n_classes)), np.zeros(0), np.zeros(0, dtype=int)
        t1 = self.clock()
        rep.prediction_time = t1 - t0
        if self.model.digest() != rep.digest_before:
            raise RuntimeError("prediction modified the model")

        # 2-4. pseudo-label, filter, compose coreset
        self._ensure_classes(yl)
        uids = self._uids(len(Xu))
        pos_idx, neg_idx, labels = self._select(Xu, mean, var, rep)
        t2 = self.clock()
        rep.selection_time = t2 - t1

        # 5. update
        chosen = np.concatenate([pos_idx, neg_idx]).astype(int)
        if len(chosen):
            dup = self.ledger.intersection(uids[chosen].tolist())
            if dup:
                raise DuplicateCoresetError(f"samples {sorted(dup)[:5]} already used in a coreset")
            self.ledger.update(uids[chosen].tolist())
        rep.coreset_positive = len(pos_idx)
        rep.coreset_negative = len(neg_idx)
        if len(Xl) == 0 and len(chosen) == 0:
            rep.skip_reason = "no labeled data and empty coreset"
        else:
            new = TrainingSet(Xl, yl).concat(
                TrainingSet(Xu[chosen], labels[chosen],
                            negative=np.r_[np.zeros(len(pos_idx), bool), np.ones(len(neg_idx), bool)]))
            pseudo_mask = np.r_[np.zeros(len(Xl), bool), np.ones(len(chosen), bool)]
            rep.loss, rep.sgd_steps, rep.n_replay = self._train(new, pseudo_mask, cfg.train.epochs_per_step)
            rep.updated = True

        # 6. remember what was trained on
        entries = [BufferEntry(int(u), Xl[i], int(yl[i]), GROUND_TRUTH, view.step)
                   for i, u in enumerate(self._uids(len(Xl)))]
        entries += [BufferEntry(int(uids[i]), Xu[i], int(labels[i]), PSEUDO, view.step) for i in pos_idx]
        self.buffer.insert(entries)
        rep.update_time = self.clock() - t2
        rep.n_classes = self.model.n_classes
        rep.digest_after = self.model.digest()
        self.step_count += 1
        return preds, rep

    def _select(self, Xu, mean, var, rep: StepReport):
        """Gate, filter and thin the unlabeled batch.

        Returns:
            (positive coreset indices, negative coreset indices, pseudo-labels)
            with indices into ``Xu``.
        """
        cfg = self.cfg
        empty = np.zeros(0, dtype=int)
        labels = mean.argmax(axis=1) if len(Xu) else empty
        if not cfg.use_cupl or len(Xu) == 0:
            rep.n_rejected = len(Xu) if cfg.use_cupl else 0
            return empty, empty, labels
        if cfg.pseudo_all:
            rep.n_accepted_positive = len(Xu)
            return np.arange(len(Xu)), empty, labels
        g = cupl.gate(mean, var, cfg.cupl)
        labels = g.labels
        rep.n_accepted_positive = int(g.positive.sum())
        rep.n_accepted_negative = int(g.negative.sum())
        rep.n_rejected = int((~g.accepted).sum())
        cand = np.flatnonzero(g.accepted)
        if cand.size == 0:
            return empty, empty, labels
        if cfg.use_rcs:
            clusters = rcs.cluster_batch(Xu[cand], cfg.rcs, self.rng)
            filt = rcs.filter_redundant(clusters, self._buffer_summaries(clusters),
                                        cfg.rcs.kl_threshold, cfg.rcs.kl_mode,
                                        float(Xu.shape[1]) if cfg.rcs.shrink_variance else 0.0)
            rep.n_clusters = len(clusters)
            rep.n_dropped_clusters = len(filt.dropped_clusters)
            if self.audit:
                rep.audit = filt.to_json()
            cand = cand[filt.surviving_indices()]
        rep.n_surviving = int(cand.size)
        pos = cand[g.positive[cand]]
        neg = cand[g.negative[cand]]
        ratio = cfg.rcs.coreset_ratio if cfg.use_rcs else 1.0
        if pos.size:
            s = rcs.coreset_size(pos.size, ratio)
            if cfg.use_gbt:
                pick, state = gbt.balanced_select(Xu[pos], labels[pos], self.buffer.class_counts(), s,
                                                  self.model.n_classes)
                rep.balance = state.to_json()
                if self.random_baseline_draws:
                    rep.balance_random = self._random_balance(labels[pos], s)
            else:
                pick = rcs.farthest_point_order(Xu[pos], s)
            pos = pos[pick]
        if neg.size:
            neg = neg[rcs.farthest_point_order(Xu[neg], rcs.coreset_size(neg.size, ratio))]
        return np.sort(pos), np.sort(neg), labels

    def _buffer_summaries(self, clusters) -> list:
        if self.cfg.rcs.buffer_partition == "class":
            return self.buffer.class_summaries()
        entries = self.buffer.entries()
        if not entries:
            return []
        X = np.stack([e.features for e in entries])
        y = np.asarray([e.label for e in entries])
        return rcs.cell_summaries(X, y, clusters, self.buffer.variance_floor, fallback=True)

    def _random_balance(self, cand_labels, s) -> float:
        """Mean objective of uniform-random coresets of the same size (audit only)."""
        rng = np.random.default_rng([self.seed, 7, self.step_count])
        counts = self.buffer.class_counts()
        scores = [gbt.balance_state(cand_labels[rng.choice(len(cand_labels), s, replace=False)],
                                    counts, self.model.n_classes).imbalance_score
                  for _ in range(self.random_baseline_draws)]
        return float(np.mean(scores))


# --------------------------------------------------------------------------
# running a whole stream
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    reports: list
    prequential_true: list
    prequential_pred: list
    final_confusions: list
    class_count: int
    init_time: float
    agent: Agent = None

    @property
    def training_time(self) -> float:
        return float(sum(r.training_time for r in self.reports))

    @property
    def trained_unlabeled(self) -> int:
        return int(sum(r.trained_unlabeled for r in self.reports))


def confusion(true, pred, k: int) -> np.ndarray:
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return m


def run_stream(scenario: Scenario, agent_cfg: AgentConfig, seed: int = 0, *,
               clock=time.perf_counter, audit: bool = False, random_baseline_draws: int = 0,
               on_step=None) -> RunResult:
    """Initialize an agent, stream every batch through it, then score the final model per task."""
    agent = Agent(agent_cfg, scenario.init_features.shape[1], seed, clock=clock, audit=audit,
                  random_baseline_draws=random_baseline_draws)
    t0 = clock()
    agent.initialize(scenario.init_features)
    init_time = clock() - t0
    reports, ptrue, ppred = [], [], []
    for batch in scenario.batches:
        preds, rep = agent.run_step(batch.view())
        reports.append(rep)
        ptrue.append(batch.true_labels_hidden)
        ppred.append(preds)
        if on_step is not None:
            on_step(rep)
    k = max(scenario.class_count, agent.model.n_classes)
    finals = [confusion(y, agent.predict(X), k)
              for X, y in zip(scenario.task_features, scenario.task_labels)]
    return RunResult(reports, ptrue, ppred, finals, k, init_time, agent)
