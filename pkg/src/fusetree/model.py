"""Observations with a prior grouping, per-group sufficient statistics and
stratified cross-validation folds."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import ContractError, EmptyDataError, ParseError, SchemaError


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` observations of ``p`` features, each allocated to one of ``K`` groups.

    ``group_of[i]`` is the 0-based group index of observation ``i``; group
    indices follow the first appearance of their label.
    """

    values: np.ndarray
    group_of: np.ndarray
    group_labels: tuple
    feature_names: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        group_of = np.asarray(self.group_of, dtype=np.int64)
        if values.ndim != 2 or group_of.shape != (values.shape[0],):
            raise ContractError("values must be (n, p) and group_of (n,)")
        if values.shape[0] == 0:
            raise EmptyDataError("dataset has no observations")
        if not np.all(np.isfinite(values)):
            raise ParseError("values contain NaN or infinite entries")
        k = len(self.group_labels)
        if group_of.min() < 0 or group_of.max() >= k:
            raise ContractError("group index out of range")
        if np.any(np.bincount(group_of, minlength=k) == 0):
            raise ContractError("every group needs at least one observation")
        names = tuple(self.feature_names) or tuple(
            f"y{j}" for j in range(values.shape[1]))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "group_of", group_of)
        object.__setattr__(self, "group_labels", tuple(self.group_labels))
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_arrays(cls, values, groups: Iterable, feature_names=()) -> "Dataset":
        """Build a dataset from raw group labels (any hashables)."""
        index: dict = {}
        group_of = [index.setdefault(g, len(index)) for g in groups]
        return cls(values, np.array(group_of, dtype=np.int64),
                   tuple(str(g) for g in index), feature_names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def k(self) -> int:
        return len(self.group_labels)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.k)

    def subset(self, rows) -> "Dataset":
        """Restrict to ``rows``; every group must keep at least one row."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.values[rows], self.group_of[rows],
                       self.group_labels, self.feature_names)


@dataclass(frozen=True, eq=False)
class GroupStats:
    """Per-group size, mean and within-group sum of squares for one feature."""

    sizes: np.ndarray
    means: np.ndarray
    within_ss: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        means = np.asarray(self.means, dtype=float)
        within = (np.zeros(len(means)) if self.within_ss is None
                  else np.asarray(self.within_ss, dtype=float))
        if not (sizes.shape == means.shape == within.shape) or sizes.ndim != 1:
            raise ContractError("sizes, means and within_ss must have equal length")
        if np.any(sizes < 1):
            raise ContractError("group sizes must be >= 1")
        if np.any(within < 0):
            raise ContractError("within-group sum of squares must be >= 0")
        labels = tuple(self.labels) or tuple(f"g{k + 1}" for k in range(len(sizes)))
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "within_ss", within)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_means(cls, means, sizes=None, labels=()) -> "GroupStats":
        means = np.asarray(means, dtype=float)
        sizes = np.ones(len(means), dtype=np.int64) if sizes is None else sizes
        return cls(sizes, means, np.zeros(len(means)), labels)

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    def take(self, index) -> "GroupStats":
        index = np.asarray(index)
        return GroupStats(self.sizes[index], self.means[index], self.within_ss[index],
                          tuple(self.labels[i] for i in index))


def group_stats(values, group_of, k: int, labels=()) -> GroupStats:
    """Two-pass group statistics for a single feature column."""
    values = np.asarray(values, dtype=float)
    sizes = np.bincount(group_of, minlength=k)
    means = np.bincount(group_of, weights=values, minlength=k) / sizes
    resid = values - means[group_of]
    within = np.bincount(group_of, weights=resid * resid, minlength=k)
    return GroupStats(sizes, means, within, labels)


def summarize(data: Dataset, feature: int = 0) -> GroupStats:
    if not 0 <= feature < data.p:
        raise ContractError(f"feature {feature} out of range for p={data.p}")
    return group_stats(data.values[:, feature], data.group_of, data.k,
                       data.group_labels)


def ingest_csv(source: BinaryIO, value_columns: Sequence[str],
               group_column: str) -> Dataset:
    """Read a UTF-8 CSV with a header row.

    Missing values, NaN and infinities are rejected rather than imputed.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    text = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDataError("input is empty") from None
    if not value_columns:
        raise SchemaError("at least one value column is required")
    position = {name: j for j, name in enumerate(header)}
    missing = [c for c in [*value_columns, group_column] if c not in position]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    cols = [position[c] for c in value_columns]
    gcol = position[group_column]

    rows, groups = [], []
    for line, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) < len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(record)}", line)
        row = []
        for name, j in zip(value_columns, cols):
            cell = record[j].strip()
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"column {name!r}: cannot parse {cell!r}", line) from None
            if not math.isfinite(x):
                raise ParseError(f"column {name!r}: non-finite value {cell!r}", line)
            row.append(x)
        rows.append(row)
        groups.append(record[gcol])
    if not rows:
        raise EmptyDataError("input has a header but no data rows")
    return Dataset.from_arrays(np.array(rows, dtype=float), groups,
                               tuple(value_columns))


def read_csv(path, value_columns, group_column) -> Dataset:
    with open(path, "rb") as fh:
        return ingest_csv(fh, value_columns, group_column)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    train: np.ndarray
    test: np.ndarray
    fold_id: int


def split_folds(data: Dataset, folds: int, seed: int) -> list[FoldSplit]:
    """Stratified folds: shuffle within each group, then deal round-robin.

    Singleton groups are pinned to the training side of every fold. The
    round-robin counter runs on across groups so test sets stay balanced.
    """
    if folds < 2:
        raise ContractError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.full(data.n, -1, dtype=np.int64)
    order = np.argsort(data.group_of, kind="stable")
    bounds = np.cumsum(data.group_sizes)[:-1]
    counter = 0
    for members in np.split(order, bounds):
        if len(members) < 2:
            continue
        members = rng.permutation(members)
        fold_of[members] = (counter + np.arange(len(members))) % folds
        counter += len(members)
    everything = np.arange(data.n)
    return [FoldSplit(everything[fold_of != f], everything[fold_of == f], f)
            for f in range(folds)]
