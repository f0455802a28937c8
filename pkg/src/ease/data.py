"""Dataset containers, fold partitioning and covariate standardisation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DegenerateColumnError,
    EmptyLabeledError,
    InfeasiblePartitionError,
    ParseError,
)
from .linalg import exact_mean

MISSING_TOKENS = {"", "na", "nan", "NA", "NaN", "."}


@dataclass(frozen=True)
class SemiSupervisedDataset:
    """Labeled pairs (y, x) plus unlabeled covariate rows.

    Arrays are copied and made read-only on construction.
    """

    labeled_y: np.ndarray
    labeled_x: np.ndarray
    unlabeled_x: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        y = np.array(self.labeled_y, dtype=float).reshape(-1)
        x = np.array(self.labeled_x, dtype=float)
        u = np.array(self.unlabeled_x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if u.size == 0:
            u = u.reshape(0, x.shape[1])
        elif u.ndim == 1:
            u = u.reshape(-1, x.shape[1])
        if x.shape[0] != y.shape[0]:
            raise DataError(f"{y.shape[0]} outcomes but {x.shape[0]} labeled covariate rows")
        if u.shape[1] != x.shape[1]:
            raise DataError(
                f"labeled rows have p={x.shape[1]} covariates, unlabeled rows have {u.shape[1]}"
            )
        if y.shape[0] == 0:
            raise EmptyLabeledError("no labeled rows")
        for name, arr in (("labeled_y", y), ("labeled_x", x), ("unlabeled_x", u)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        for arr in (y, x, u):
            arr.setflags(write=False)
        object.__setattr__(self, "labeled_y", y)
        object.__setattr__(self, "labeled_x", x)
        object.__setattr__(self, "unlabeled_x", u)
        cols = tuple(self.columns) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(cols) != x.shape[1]:
            raise DataError("column names do not match covariate dimension")
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.labeled_y.shape[0]

    @property
    def big_n(self) -> int:
        return self.unlabeled_x.shape[0]

    @property
    def p(self) -> int:
        return self.labeled_x.shape[1]

    def check_estimable(self):
        """Require n >= p + 2 so the augmented design can be full rank."""
        if self.n < self.p + 2:
            raise DataError(f"n={self.n} labeled rows is too few for p={self.p} (need p+2)")

    def with_labeled(self, index) -> "SemiSupervisedDataset":
        """Sub-dataset keeping only the given labeled rows (all unlabeled rows kept)."""
        index = np.asarray(index)
        return SemiSupervisedDataset(
            self.labeled_y[index], self.labeled_x[index], self.unlabeled_x, self.columns
        )

    def pooled_x(self) -> np.ndarray:
        return np.vstack([self.labeled_x, self.unlabeled_x])


def _parse_float(cell, row, column):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: cannot parse {cell!r} as a number")
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: non-finite value {cell!r}")
    return value


def load_dataset(source, outcome: str = "y", covariates=None) -> SemiSupervisedDataset:
    """Read a comma-separated table with a header row.

    Rows whose outcome cell is blank (or NA) become unlabeled. Covariate
    cells must all be present and numeric. ``source`` is a path or an open
    text stream.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return load_dataset(fh, outcome, covariates)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyLabeledError("input is empty")
    if outcome not in header:
        raise ParseError(f"outcome column {outcome!r} not in header {header}")
    y_col = header.index(outcome)
    if covariates is None:
        covariates = [h for h in header if h != outcome]
    missing = [c for c in covariates if c not in header]
    if missing:
        raise ParseError(f"covariate columns not in header: {missing}")
    x_cols = [header.index(c) for c in covariates]
    lab_y, lab_x, unl_x = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} cells, found {len(row)}")
        xs = []
        for name, j in zip(covariates, x_cols):
            cell = row[j].strip()
            if cell in MISSING_TOKENS:
                raise ParseError(f"row {lineno}, column {name!r}: missing covariate")
            xs.append(_parse_float(cell, lineno, name))
        cell = row[y_col].strip()
        if cell in MISSING_TOKENS:
            unl_x.append(xs)
        else:
            lab_y.append(_parse_float(cell, lineno, outcome))
            lab_x.append(xs)
    if not lab_y:
        raise EmptyLabeledError("no rows with an observed outcome")
    p = len(covariates)
    return SemiSupervisedDataset(
        np.array(lab_y),
        np.array(lab_x).reshape(-1, p),
        np.array(unl_x).reshape(-1, p),
        tuple(covariates),
    )


def load_dataset_text(text: str, **kwargs) -> SemiSupervisedDataset:
    return load_dataset(io.StringIO(text), **kwargs)


def merge_unlabeled(dataset: SemiSupervisedDataset, extra_x) -> SemiSupervisedDataset:
    extra_x = np.asarray(extra_x, dtype=float).reshape(-1, dataset.p)
    return SemiSupervisedDataset(
        dataset.labeled_y,
        dataset.labeled_x,
        np.vstack([dataset.unlabeled_x, extra_x]),
        dataset.columns,
    )


@dataclass(frozen=True)
class FoldAssignment:
    """Fold label (1..K) for every labeled index."""

    k_folds: int
    membership: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        m = np.array(self.membership, dtype=np.int64)
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    def indices(self, k: int) -> np.ndarray:
        """Labeled indices in fold k (1-based). For K=1 this is every index."""
        return np.flatnonzero(self.membership == k)

    def training(self, k: int) -> np.ndarray:
        """Indices used to train the fold-k nuisance fits (all of L when K=1)."""
        if self.k_folds == 1:
            return np.arange(self.n)
        return np.flatnonzero(self.membership != k)

    def sizes(self) -> list[int]:
        return [int(np.sum(self.membership == k)) for k in range(1, self.k_folds + 1)]

    def to_json(self) -> str:
        return json.dumps([int(v) for v in self.membership])

    @classmethod
    def from_json(cls, text: str, seed=None) -> "FoldAssignment":
        m = np.array(json.loads(text), dtype=np.int64)
        return cls(int(m.max()), m, seed)


def partition_folds(n: int, k_folds: int, seed) -> FoldAssignment:
    """Uniform random partition of range(n) into K near-equal folds.

    When K does not divide n the remainder goes to the lowest-numbered folds.
    """
    if k_folds < 1:
        raise InfeasiblePartitionError("need at least one fold")
    if k_folds > n:
        raise InfeasiblePartitionError(f"cannot split {n} rows into {k_folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    base, extra = divmod(n, k_folds)
    membership = np.empty(n, dtype=np.int64)
    start = 0
    for k in range(k_folds):
        size = base + (1 if k < extra else 0)
        membership[perm[start:start + size]] = k + 1
        start += size
    return FoldAssignment(k_folds, membership, None if seed is None else int(seed))


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    scales: np.ndarray
    scope: str = "pooled"

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.means) / self.scales

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.scales + self.means


def standardize(dataset: SemiSupervisedDataset, scope: str = "pooled"):
    """Centre and scale covariates to mean 0, sample sd 1 within ``scope``.

    ``scope`` is ``"labeled"`` or ``"pooled"`` (labeled + unlabeled).
    Returns the transformed dataset and the parameters that invert it.
    """
    if scope == "labeled":
        ref = dataset.labeled_x
    elif scope == "pooled":
        ref = dataset.pooled_x()
    else:
        raise ValueError(f"unknown scope {scope!r}")
    if ref.shape[0] < 2:
        raise DataError("need at least two rows to standardise")
    means = exact_mean(ref, axis=0)
    scales = np.sqrt(exact_mean((ref - means) ** 2, axis=0) * ref.shape[0] / (ref.shape[0] - 1))
    for j, s in enumerate(scales):
        if not s > 0:
            raise DegenerateColumnError(dataset.columns[j])
    params = StandardizationParams(means, scales, scope)
    out = SemiSupervisedDataset(
        dataset.labeled_y,
        params.apply(dataset.labeled_x),
        params.apply(dataset.unlabeled_x) if dataset.big_n else dataset.unlabeled_x,
        dataset.columns,
    )
    return out, params


def load_covariates(source, columns) -> np.ndarray:
    """Read the named covariate columns of a comma-separated table (other columns ignored)."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return load_covariates(fh, columns)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        return np.empty((0, len(columns)))
    missing = [c for c in columns if c not in header]
    if missing:
        raise ParseError(f"covariate columns not in header: {missing}")
    idx = [header.index(c) for c in columns]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} cells, found {len(row)}")
        xs = []
        for name, j in zip(columns, idx):
            cell = row[j].strip()
            if cell in MISSING_TOKENS:
                raise ParseError(f"row {lineno}, column {name!r}: missing covariate")
            xs.append(_parse_float(cell, lineno, name))
        rows.append(xs)
    return np.array(rows, dtype=float).reshape(-1, len(columns))
