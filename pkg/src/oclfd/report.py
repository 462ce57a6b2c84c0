"""Run artifacts: metric JSON, step JSONL, plot-ready CSV and rendered figures.

Every file opens with the same header (schema version, data source, seeds and
the full resolved config), so a run can be rebuilt from any single output.
CSV files carry that header as a ``#`` comment line.  Wall-clock numbers are
kept in their own timing files so that the metric files of two identically
seeded runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import RunMetrics, UndefinedMetricError, task_metrics  # noqa: E402

SCHEMA_VERSION = 1
METRIC_NAMES = ("recall", "precision", "f1", "gmean")


def make_header(kind: str, *, data: str, seeds, config: dict, scenario: dict, extra=None) -> dict:
    h = {"schema_version": SCHEMA_VERSION, "kind": kind, "data": data,
         "seeds": [int(s) for s in seeds], "scenario": scenario, "config": config}
    if extra:
        h.update(extra)
    return h


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def write_json(path, header: dict, body: dict) -> None:
    Path(path).write_text(json.dumps({"header": header, **body}, sort_keys=True, indent=2,
                                     allow_nan=False) + "\n")


def write_jsonl(path, header: dict, records) -> None:
    with open(path, "w") as fh:
        fh.write(_dump({"header": header}) + "\n")
        for rec in records:
            fh.write(_dump(rec) + "\n")


def read_jsonl(path) -> tuple[dict, list]:
    lines = Path(path).read_text().splitlines()
    return json.loads(lines[0])["header"], [json.loads(x) for x in lines[1:]]


def write_csv(path, header: dict, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + _dump(header) + "\n")
        w = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fieldnames})


def read_csv(path) -> tuple[dict, list]:
    with open(path, newline="") as fh:
        first = fh.readline()
        rows = list(csv.DictReader(fh))
    return json.loads(first[2:]), rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

def summary_rows(runs: list[RunMetrics], seeds) -> list[dict]:
    """One row per run, then ``mean`` and ``std`` (population) rows."""
    rows = [{"run": str(i), "seed": int(s), **{m: getattr(r, f"avg_end_{m}") for m in METRIC_NAMES}}
            for i, (r, s) in enumerate(zip(runs, seeds))]
    vals = {m: np.array([getattr(r, f"avg_end_{m}") for r in runs]) for m in METRIC_NAMES}
    rows.append({"run": "mean", "seed": None, **{m: float(v.mean()) for m, v in vals.items()}})
    rows.append({"run": "std", "seed": None, **{m: float(v.std()) for m, v in vals.items()}})
    return rows


def curve_rows(run_index: int, result) -> list[dict]:
    """Prequential metrics after every step, from the running confusion matrix."""
    k = result.class_count
    cm = np.zeros((k, k), dtype=np.int64)
    rows = []
    for rep, yt, yp in zip(result.reports, result.prequential_true, result.prequential_pred):
        np.add.at(cm, (np.asarray(yt, dtype=int), np.asarray(yp, dtype=int)), 1)
        row = {"run": run_index, "step": rep.step, "condition_id": rep.condition_id,
               "trained_unlabeled": rep.trained_unlabeled, "updated": int(rep.updated)}
        try:
            tm = task_metrics(cm)
            row.update({m: getattr(tm, m) for m in METRIC_NAMES})
        except UndefinedMetricError:
            row.update({m: None for m in METRIC_NAMES})
        rows.append(row)
    return rows


CURVE_FIELDS = ("run", "step", "condition_id", "trained_unlabeled", "updated", *METRIC_NAMES)
SUMMARY_FIELDS = ("run", "seed", *METRIC_NAMES)
TIMING_FIELDS = ("run", "step", "prediction_time", "selection_time", "update_time")
SWEEP_FIELDS = ("param", "value", *METRIC_NAMES, "trained_unlabeled", "training_time_seconds")


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------

def plot_curves(rows: list[dict], path, metric: str = "f1") -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for run in sorted({r["run"] for r in rows}):
        pts = [(r["step"], r[metric]) for r in rows if r["run"] == run and r[metric] is not None]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, label=f"run {run}")
    ax.set_xlabel("step")
    ax.set_ylabel(f"prequential {metric}")
    ax.set_ylim(0, 1.02)
    if len({r["run"] for r in rows}) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_sweep(rows: list[dict], path) -> None:
    param = rows[0]["param"]
    xs = [float(r["value"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for m in METRIC_NAMES:
        ax.plot(xs, [r[m] for r in rows], marker="o", label=m)
    ax.set_xlabel(param)
    ax.set_ylabel("Avg-End score")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
