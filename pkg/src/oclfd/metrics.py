"""Imbalance-aware metrics from confusion matrices.

Rows are true classes, columns predicted classes.  A 2x2 matrix is scored
the binary way (class 1 is the positive/fault class); larger matrices are
macro-averaged over the classes that actually occur.  G-mean is always the
geometric mean of per-class recalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UndefinedMetricError(ValueError):
    pass


@dataclass
class TaskMetrics:
    recall: float
    precision: float
    f1: float
    gmean: float
    per_class_recall: dict
    per_class_precision: dict
    unpredicted_classes: list = field(default_factory=list)
    unsupported_classes: list = field(default_factory=list)


@dataclass
class RunMetrics:
    per_task: list
    confusions: list
    avg_end_recall: float
    avg_end_precision: float
    avg_end_f1: float
    avg_end_gmean: float
    training_time_seconds: float = 0.0

    def to_json(self, include_timing: bool = False) -> dict:
        d = {
            "avg_end_recall": self.avg_end_recall,
            "avg_end_precision": self.avg_end_precision,
            "avg_end_f1": self.avg_end_f1,
            "avg_end_gmean": self.avg_end_gmean,
            "per_task": [
                {"recall": t.recall, "precision": t.precision, "f1": t.f1, "gmean": t.gmean,
                 "per_class_recall": {str(k): v for k, v in t.per_class_recall.items()},
                 "per_class_precision": {str(k): v for k, v in t.per_class_precision.items()},
                 "unpredicted_classes": t.unpredicted_classes,
                 "unsupported_classes": t.unsupported_classes}
                for t in self.per_task
            ],
            "confusions": [np.asarray(c).tolist() for c in self.confusions],
        }
        if include_timing:
            d["training_time_seconds"] = self.training_time_seconds
        return d


def task_metrics(cm) -> TaskMetrics:
    cm = np.asarray(cm, dtype=float)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if cm.sum() == 0:
        raise UndefinedMetricError("confusion matrix is all zeros")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    k = cm.shape[0]
    supported = [c for c in range(k) if support[c] > 0]
    recall = {c: tp[c] / support[c] for c in supported}
    precision = {c: tp[c] / predicted[c] for c in supported if predicted[c] > 0}
    unpredicted = [c for c in supported if predicted[c] == 0]
    f1 = {c: 2 * tp[c] / (support[c] + predicted[c]) for c in supported}
    gmean = float(np.prod([recall[c] for c in supported]) ** (1.0 / len(supported)))
    if k == 2 and support[1] > 0:
        r = recall[1]
        p = precision.get(1, 0.0)
        f = f1[1]
    else:
        r = float(np.mean([recall[c] for c in supported]))
        p = float(np.mean(list(precision.values()))) if precision else 0.0
        f = float(np.mean([f1[c] for c in supported]))
    return TaskMetrics(float(r), float(p), float(f), gmean,
                       {c: float(v) for c, v in recall.items()},
                       {c: float(v) for c, v in precision.items()},
                       unpredicted, [c for c in range(k) if support[c] == 0])


def compute_metrics(confusions, training_time: float = 0.0) -> RunMetrics:
    """Per-task metrics and their mean over tasks (the Avg-End numbers)."""
    confusions = [np.asarray(c) for c in confusions]
    if not confusions:
        raise UndefinedMetricError("no confusion matrices given")
    tasks = [task_metrics(c) for c in confusions]
    return RunMetrics(tasks, confusions,
                      float(np.mean([t.recall for t in tasks])),
                      float(np.mean([t.precision for t in tasks])),
                      float(np.mean([t.f1 for t in tasks])),
                      float(np.mean([t.gmean for t in tasks])),
                      training_time)
