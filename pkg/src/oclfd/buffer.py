"""Bounded class-partitioned replay memory.

Entries are grouped by label.  When the capacity is exceeded the buffer evicts
from the largest class first (pseudo-labeled entries before ground-truth ones),
which keeps the partitions as even as the data allows.  A plain reservoir
policy is available for the experience-replay baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import InputShapeError

GROUND_TRUTH = "ground-truth"
PSEUDO = "pseudo"
VARIANCE_FLOOR = 1e-6


@dataclass
class BufferEntry:
    uid: int
    features: np.ndarray
    label: int
    source: str = GROUND_TRUTH
    step_added: int = 0

    def to_json(self) -> dict:
        return {"uid": int(self.uid), "features": np.asarray(self.features, dtype=float).tolist(),
                "label": int(self.label), "source": self.source, "step_added": int(self.step_added)}

    @classmethod
    def from_json(cls, d: dict) -> "BufferEntry":
        return cls(d["uid"], np.asarray(d["features"], dtype=float), d["label"],
                   d["source"], d["step_added"])


@dataclass
class ClusterSummary:
    """Diagonal-Gaussian statistics of a group of samples."""

    cluster_id: int
    count: int
    mean: np.ndarray
    diag_variance: np.ndarray
    member_ids: list = field(default_factory=list)


def summarize(X: np.ndarray, member_ids, cluster_id: int,
              variance_floor: float = VARIANCE_FLOOR) -> ClusterSummary:
    """Sample mean and floored population variance of the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("cannot summarize an empty group")
    mean = X.mean(axis=0)
    var = np.maximum(X.var(axis=0), variance_floor)
    return ClusterSummary(int(cluster_id), X.shape[0], mean, var, list(member_ids))


@dataclass
class EvictionReport:
    evicted_ids: list = field(default_factory=list)

    def __len__(self):
        return len(self.evicted_ids)


class ReplayBuffer:
    """Replay memory holding at most ``capacity`` entries.

    Args:
        capacity: maximum number of entries.
        dim: feature dimension; every entry is checked against it.
        policy: ``"balanced"`` (largest class evicts first) or ``"reservoir"``
            (classic uniform reservoir over everything ever offered).
        replay: ``"stratified"`` (equal share per class) or ``"uniform"``.
        seed: seed for the eviction RNG.
    """

    def __init__(self, capacity: int, dim: int, *, policy: str = "balanced",
                 replay: str = "stratified", variance_floor: float = VARIANCE_FLOOR, seed: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if policy not in ("balanced", "reservoir"):
            raise ValueError(f"unknown eviction policy {policy!r}")
        if replay not in ("stratified", "uniform"):
            raise ValueError(f"unknown replay mode {replay!r}")
        self.capacity = capacity
        self.dim = dim
        self.policy = policy
        self.replay = replay
        self.variance_floor = variance_floor
        self.rng = np.random.default_rng(seed)
        self.partitions: dict[int, list[BufferEntry]] = {}
        self.num_seen = 0

    def __len__(self) -> int:
        return sum(len(p) for p in self.partitions.values())

    def __iter__(self):
        for label in sorted(self.partitions):
            yield from self.partitions[label]

    def class_counts(self) -> dict[int, int]:
        return {k: len(v) for k, v in sorted(self.partitions.items()) if v}

    def entries(self) -> list[BufferEntry]:
        return list(self)

    def _check(self, e: BufferEntry):
        f = np.asarray(e.features, dtype=float)
        if f.shape != (self.dim,):
            raise InputShapeError(f"buffer expects dim {self.dim}, got {f.shape}")
        if e.source not in (GROUND_TRUTH, PSEUDO):
            raise ValueError(f"unknown entry source {e.source!r}")

    def insert(self, entries) -> EvictionReport:
        entries = list(entries)
        for e in entries:
            self._check(e)
        if self.policy == "reservoir":
            return self._insert_reservoir(entries)
        for e in entries:
            self.partitions.setdefault(int(e.label), []).append(e)
        report = EvictionReport()
        while len(self) > self.capacity:
            report.evicted_ids.append(self._evict_one())
        return report

    def _evict_one(self) -> int:
        counts = self.class_counts()
        top = max(counts.values())
        label = min(k for k, v in counts.items() if v == top)
        part = self.partitions[label]
        pseudo = [i for i, e in enumerate(part) if e.source == PSEUDO]
        pool = pseudo if pseudo else range(len(part))
        victim = int(self.rng.choice(list(pool)))
        return part.pop(victim).uid

    def _insert_reservoir(self, entries) -> EvictionReport:
        report = EvictionReport()
        flat = self.entries()
        for e in entries:
            self.num_seen += 1
            if len(flat) < self.capacity:
                flat.append(e)
                continue
            j = int(self.rng.integers(0, self.num_seen))
            if j < self.capacity:
                report.evicted_ids.append(flat[j].uid)
                flat[j] = e
            else:
                report.evicted_ids.append(e.uid)
        self.partitions = {}
        for e in flat:
            self.partitions.setdefault(int(e.label), []).append(e)
        return report

    def class_summaries(self) -> list[ClusterSummary]:
        out = []
        for label, part in sorted(self.partitions.items()):
            if not part:
                continue
            X = np.stack([e.features for e in part])
            out.append(summarize(X, [e.uid for e in part], label, self.variance_floor))
        return out

    def replay_batch(self, size: int, rng: np.random.Generator) -> list[BufferEntry]:
        """Sample without replacement; stratified mode gives every class an equal share.

        Shares of classes with too few entries are redistributed to the others,
        so a rare class contributes everything it has before the large ones
        fill the rest.
        """
        if size < 0:
            raise ValueError("size must be >= 0")
        total = len(self)
        if size == 0:
            return []
        if size >= total:
            return self.entries()
        if self.replay == "uniform":
            flat = self.entries()
            idx = rng.choice(total, size=size, replace=False)
            return [flat[i] for i in sorted(idx)]
        counts = self.class_counts()
        labels = list(counts)
        alloc = dict.fromkeys(labels, 0)
        remaining = size
        open_labels = list(labels)
        while remaining > 0 and open_labels:
            share, extra = divmod(remaining, len(open_labels))
            if share == 0:
                lucky = rng.choice(len(open_labels), size=extra, replace=False)
                for i in lucky:
                    alloc[open_labels[i]] += 1
                break
            for lab in open_labels:
                alloc[lab] += share
            remaining = extra
            for lab in open_labels:
                over = alloc[lab] - counts[lab]
                if over > 0:
                    alloc[lab] = counts[lab]
                    remaining += over
            open_labels = [lab for lab in open_labels if alloc[lab] < counts[lab]]
        out = []
        for lab in labels:
            part = self.partitions[lab]
            idx = rng.choice(len(part), size=alloc[lab], replace=False)
            out.extend(part[i] for i in sorted(idx))
        return out

    def export_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self:
                fh.write(json.dumps(e.to_json()) + "\n")

    def import_jsonl(self, path) -> None:
        self.partitions = {}
        entries = [BufferEntry.from_json(json.loads(line))
                   for line in Path(path).read_text().splitlines() if line.strip()]
        for e in entries:
            self._check(e)
            self.partitions.setdefault(int(e.label), []).append(e)
        if len(self) > self.capacity:
            raise ValueError("snapshot exceeds buffer capacity")
