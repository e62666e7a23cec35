"""Datasets: container, CSV round-tripping, synthetic generation, splitting.

The on-disk format is a plain CSV with a header row: feature columns
f0..f{D-1}, an integer private label column y, an optional integer target
label column z, and an integer subject column.  Labels are relabeled to
be contiguous from 1 on load (original order preserved); floats are
written with 17 significant digits so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, ShapeError


def _check_label_array(values, name) -> np.ndarray:
    """Labels are positive integers.  Contiguity from 1 is established by
    relabeling at load/generation time; subsets of a valid dataset may
    lose a class, so the container itself only requires positivity."""
    values = np.asarray(values)
    if values.ndim != 1 or values.size == 0:
        raise ShapeError(f"{name} must be a non-empty 1-d array")
    if not np.issubdtype(values.dtype, np.integer):
        as_int = values.astype(np.int64)
        if not np.all(values == as_int):
            raise DataError(f"{name} must be integers")
        values = as_int
    values = values.astype(np.int64)
    if values.min() < 1:
        raise DataError(f"{name} labels must start at 1")
    return values


@dataclass(frozen=True)
class Dataset:
    """Features with private labels y, optional target labels z, subjects."""

    X: np.ndarray
    y: np.ndarray
    subject_ids: np.ndarray
    z: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ShapeError("X must be a non-empty 2-d array")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite values")
        y = _check_label_array(self.y, "y")
        subjects = np.asarray(self.subject_ids)
        if not np.issubdtype(subjects.dtype, np.integer):
            raise DataError("subject_ids must be integers")
        subjects = subjects.astype(np.int64)
        n = X.shape[0]
        if y.size != n or subjects.size != n:
            raise ShapeError("labels and subject ids must match the sample count")
        z = self.z
        if z is not None:
            z = _check_label_array(z, "z")
            if z.size != n:
                raise ShapeError("z must match the sample count")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "subject_ids", subjects)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_private_classes(self) -> int:
        return int(self.y.max())

    @property
    def num_target_classes(self) -> int:
        if self.z is None:
            raise DataError("dataset has no target labels")
        return int(self.z.max())

    @property
    def n_subjects(self) -> int:
        return int(np.unique(self.subject_ids).size)

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.X[indices], self.y[indices],
                       self.subject_ids[indices],
                       None if self.z is None else self.z[indices],
                       self.name)


@dataclass(frozen=True)
class CsvSchema:
    """Column names; ``feature_cols=None`` takes every f-prefixed column."""

    feature_cols: tuple | None = None
    y_col: str = "y"
    z_col: str = "z"
    subject_col: str = "subject"


def _relabel_contiguous(values) -> np.ndarray:
    """Map sorted distinct values onto 1..K."""
    values = np.asarray(values, dtype=np.int64)
    _, inverse = np.unique(values, return_inverse=True)
    return (inverse + 1).astype(np.int64)


def load_csv(path, schema: CsvSchema = CsvSchema()) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    index = {name: i for i, name in enumerate(header)}
    if schema.feature_cols is None:
        feature_cols = [name for name in header
                        if name.startswith("f") and name[1:].isdigit()]
        feature_cols.sort(key=lambda name: int(name[1:]))
        if not feature_cols:
            raise DataError(f"{path}: no f0..fD feature columns found")
    else:
        feature_cols = list(schema.feature_cols)
    for name in feature_cols + [schema.y_col, schema.subject_col]:
        if name not in index:
            raise DataError(f"{path}: missing column {name!r}")
    has_z = schema.z_col in index
    feature_idx = [index[name] for name in feature_cols]

    X = np.empty((len(rows), len(feature_cols)))
    y = np.empty(len(rows), dtype=np.int64)
    z = np.empty(len(rows), dtype=np.int64) if has_z else None
    subjects = np.empty(len(rows), dtype=np.int64)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        try:
            for c, col in enumerate(feature_idx):
                X[r, c] = float(row[col])
            y[r] = int(row[index[schema.y_col]])
            subjects[r] = int(row[index[schema.subject_col]])
            if has_z:
                z[r] = int(row[index[schema.z_col]])
        except ValueError as exc:
            raise DataError(f"{path}: row {r}: {exc}") from None
        if not np.all(np.isfinite(X[r])):
            raise DataError(f"{path}: row {r} contains a non-finite feature")
    return Dataset(X, _relabel_contiguous(y), subjects,
                   None if z is None else _relabel_contiguous(z),
                   name=str(path))


def save_csv(data: Dataset, path) -> None:
    header = [f"f{j}" for j in range(data.dim)] + ["y"]
    if data.z is not None:
        header.append("z")
    header.append("subject")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n_samples):
            row = [format(v, ".17g") for v in data.X[i]]
            row.append(int(data.y[i]))
            if data.z is not None:
                row.append(int(data.z[i]))
            row.append(int(data.subject_ids[i]))
            writer.writerow(row)


def gen_synthetic(dim, n_subjects, n_target_classes, per_subject,
                  angle_deg=90.0, subject_sep=3.0, target_sep=3.0,
                  noise=0.5, seed=None, name="synthetic") -> Dataset:
    """Gaussian clusters with controllable subject/target geometry.

    Subject means are spaced ``subject_sep`` apart along e1 (centered at
    the origin); target-class offsets are spaced ``target_sep`` apart
    along the unit direction at ``angle_deg`` degrees from e1 in the
    (e1, e2) plane.  angle 90 makes the two factors orthogonal (fully
    separable), angle 0 makes them collinear (maximally conflicting).
    Private labels y are the subject index; target labels z cycle through
    the classes within each subject.
    """
    if dim < 2:
        raise ShapeError("dim must be at least 2")
    if n_subjects < 1 or n_target_classes < 1 or per_subject < 1:
        raise ShapeError("subject, class, and per-subject counts must be positive")
    if not (math.isfinite(angle_deg) and 0.0 <= angle_deg <= 180.0):
        raise DataError("angle_deg must be a finite angle in [0, 180]")
    if noise < 0 or subject_sep < 0 or target_sep < 0:
        raise DataError("separations and noise must be non-negative")
    rng = np.random.default_rng(seed)
    angle = math.radians(angle_deg)
    target_dir = np.zeros(dim)
    target_dir[0] = math.cos(angle)
    target_dir[1] = math.sin(angle)

    n = n_subjects * per_subject
    X = np.empty((n, dim))
    y = np.empty(n, dtype=np.int64)
    z = np.empty(n, dtype=np.int64)
    subjects = np.empty(n, dtype=np.int64)
    row = 0
    for s in range(1, n_subjects + 1):
        mean = np.zeros(dim)
        mean[0] = (s - 0.5 * (n_subjects + 1)) * subject_sep
        for j in range(per_subject):
            cls = j % n_target_classes + 1
            offset = (cls - 0.5 * (n_target_classes + 1)) * target_sep
            point = mean + offset * target_dir
            if noise > 0:
                point = point + noise * rng.standard_normal(dim)
            X[row] = point
            y[row] = s
            z[row] = cls
            subjects[row] = s
            row += 1
    return Dataset(X, y, subjects, z, name=name)


def split_per_subject(data: Dataset, fraction: float, seed=None):
    """Seeded per-subject split; every subject lands in both halves.

    ceil(fraction * n_s) samples of each subject go to the training half
    (capped so at least one sample is held out), after a per-subject
    shuffle.  Identical seeds give identical splits.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError("fraction must lie strictly between 0 and 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    train_idx = []
    test_idx = []
    for subject in np.unique(data.subject_ids):
        rows = np.flatnonzero(data.subject_ids == subject)
        if rows.size < 2:
            raise DataError(
                f"subject {subject} has {rows.size} sample(s); need at least 2 to split"
            )
        order = rng.permutation(rows.size)
        n_train = min(math.ceil(fraction * rows.size), rows.size - 1)
        shuffled = rows[order]
        train_idx.extend(shuffled[:n_train])
        test_idx.extend(shuffled[n_train:])
    return data.take(np.array(train_idx)), data.take(np.array(test_idx))
