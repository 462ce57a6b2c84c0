"""CSV ingestion, manifests, and synthetic Gaussian-blob streams.

CSV layout: one row per sample, ``d`` feature columns, an integer label
column, then an optional integer condition column.  A header row is allowed
when the manifest says so.  Label 0 is the normal class.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataValidationError(ValueError):
    pass


class CsvParseError(DataValidationError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = str(path)
        self.line = line


@dataclass
class SourceFile:
    path: str
    header: bool = False
    has_condition: bool = False


@dataclass
class DatasetManifest:
    name: str
    feature_dim: int
    class_count: int
    per_class_counts: list | None = None
    condition_count: int = 1
    source_files: list = field(default_factory=list)

    def __post_init__(self):
        self.source_files = [s if isinstance(s, SourceFile) else SourceFile(**s)
                             for s in self.source_files]
        if self.feature_dim < 1 or self.class_count < 1:
            raise DataValidationError("feature_dim and class_count must be positive")
        if self.per_class_counts is not None:
            if len(self.per_class_counts) != self.class_count:
                raise DataValidationError("per_class_counts length must equal class_count")
            if min(self.per_class_counts) <= 0:
                raise DataValidationError("per_class_counts must be positive")

    @classmethod
    def from_file(cls, path) -> "DatasetManifest":
        path = Path(path)
        d = json.loads(path.read_text())
        for s in d.get("source_files", []):
            p = Path(s["path"])
            if not p.is_absolute():
                s["path"] = str(path.parent / p)
        return cls(**d)

    def to_json(self) -> dict:
        return {"name": self.name, "feature_dim": self.feature_dim, "class_count": self.class_count,
                "per_class_counts": self.per_class_counts, "condition_count": self.condition_count,
                "source_files": [vars(s) for s in self.source_files]}


# Public benchmark layouts (normal class first).
TEP_COUNTS = [4320] + [800] * 21
CARLA_SINGLE_COUNTS = [89166, 2404, 1803, 2404, 2404, 2404, 1604, 2004, 1803, 2004]


def tep_manifest(path, header: bool = False) -> DatasetManifest:
    return DatasetManifest("TEP", 52, 22, list(TEP_COUNTS), 1, [SourceFile(str(path), header)])


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    conditions: np.ndarray
    name: str = "dataset"

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def _parse_file(src: SourceFile, d: int):
    feats, labels, conds = [], [], []
    width = d + 1 + int(src.has_condition)
    with open(src.path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and src.header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise CsvParseError(src.path, lineno, f"expected {width} columns, got {len(row)}")
            try:
                x = [float(v) for v in row[:d]]
                y = int(row[d])
                cond = int(row[d + 1]) if src.has_condition else 0
            except ValueError as exc:
                raise CsvParseError(src.path, lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in x):
                raise CsvParseError(src.path, lineno, "missing or non-finite feature value")
            if y < 0:
                raise CsvParseError(src.path, lineno, "negative label")
            feats.append(x)
            labels.append(y)
            conds.append(cond)
    return feats, labels, conds


def load_csv(manifest: DatasetManifest) -> Dataset:
    """Read all source files of a manifest and validate them against it."""
    feats, labels, conds = [], [], []
    for src in manifest.source_files:
        if not Path(src.path).exists():
            raise DataValidationError(f"missing source file {src.path}")
        f, y, c = _parse_file(src, manifest.feature_dim)
        feats += f
        labels += y
        conds += c
    if not labels:
        raise DataValidationError(f"dataset {manifest.name!r} is empty")
    ds = Dataset(np.asarray(feats, dtype=float), np.asarray(labels, dtype=int),
                 np.asarray(conds, dtype=int), manifest.name)
    if ds.labels.max() >= manifest.class_count:
        raise DataValidationError(f"label {ds.labels.max()} outside class_count {manifest.class_count}")
    if manifest.per_class_counts is not None:
        got = np.bincount(ds.labels, minlength=manifest.class_count).tolist()
        if got != list(manifest.per_class_counts):
            raise DataValidationError(f"per-class counts {got} differ from manifest "
                                      f"{list(manifest.per_class_counts)}")
    if ds.conditions.max() >= manifest.condition_count:
        raise DataValidationError("condition id outside condition_count")
    return ds


def write_csv(ds: Dataset, path, header: bool = False, with_condition: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            cols = [f"x{i}" for i in range(ds.dim)] + ["label"] + (["condition"] if with_condition else [])
            w.writerow(cols)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
            if with_condition:
                row.append(int(ds.conditions[i]))
            w.writerow(row)


def synth_blobs(class_count: int, dim: int, per_class_counts, separations,
                rng: np.random.Generator) -> Dataset:
    """Unit-variance Gaussian blobs.

    Class ``k`` is centred at ``k * separation`` along axis ``k - 1`` (class 0
    at the origin), so every class mean is the origin plus one scaled basis
    vector and ``separations[k]`` is the distance from class 0.
    """
    counts = list(per_class_counts)
    if len(counts) != class_count:
        raise ValueError("per_class_counts must have one entry per class")
    seps = np.broadcast_to(np.asarray(separations, dtype=float), (class_count,))
    if (seps < 0).any():
        raise ValueError("separations must be nonnegative")
    if class_count - 1 > dim:
        raise ValueError("need dim >= class_count - 1 to place the class means")
    means = np.zeros((class_count, dim))
    for k in range(1, class_count):
        means[k, k - 1] = seps[k]
    feats, labels = [], []
    for k, n in enumerate(counts):
        feats.append(rng.standard_normal((n, dim)) + means[k])
        labels.append(np.full(n, k))
    X = np.vstack(feats)
    y = np.concatenate(labels)
    perm = rng.permutation(len(y))
    return Dataset(X[perm], y[perm], np.zeros(len(y), dtype=int), f"synth{class_count}")


def synth_fixture(seed: int, stream_size: int = 4000, init_normals: int = 1000,
                  priors=(0.90, 0.09, 0.01), dim: int = 8, separation: float = 5.0) -> Dataset:
    """The imbalanced three-class stream used by the acceptance experiments.

    ``stream_size`` samples follow ``priors``; ``init_normals`` extra normal
    samples are added for pretraining (the scenario builder carves them out).
    """
    counts = [int(round(p * stream_size)) for p in priors]
    counts[0] += init_normals
    rng = np.random.default_rng(seed)
    ds = synth_blobs(len(counts), dim, counts, [0.0] + [separation] * (len(counts) - 1), rng)
    ds.name = "synth3"
    return ds


class Standardizer:
    """Per-feature z-scoring fitted on one pool and applied to everything else."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = mean
        self.scale = scale

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.atleast_2d(X)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale
