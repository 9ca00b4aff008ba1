"""Dataset container, CSV ingestion, and deterministic train/val/test splits."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .rng import generator

log = logging.getLogger("crpslab")

# Parsing presets for the two benchmark sources. "delimiter None" means
# whitespace-separated (the airfoil file is tab-delimited raw text).
PRESETS = {
    "qsar": {
        "delimiter": ";",
        "has_header": False,
        "columns": ["TPSA", "SAacc", "H050", "MLOGP", "RDCHI", "GATS1p", "nN", "C040", "LC50"],
        "target": "LC50",
    },
    "airfoil": {
        "delimiter": None,
        "has_header": False,
        "columns": [
            "frequency",
            "angle_of_attack",
            "chord_length",
            "free_stream_velocity",
            "suction_side_thickness",
            "sound_pressure_level",
        ],
        "target": "sound_pressure_level",
    },
}


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix X (n x d) with response vector Y (n,)."""

    X: np.ndarray
    Y: np.ndarray
    columns: tuple = ()
    source: str = ""

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        Y = np.asarray(self.Y, dtype=np.float64).ravel()
        if X.shape[0] != Y.size or Y.size == 0:
            raise InputError("X rows and Y length must match and be nonzero")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("dataset contains non-finite values")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.Y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.Y[idx], self.columns, self.source)


def _looks_like_header(fields) -> bool:
    for f in fields:
        try:
            float(f)
        except ValueError:
            return True
    return False


def load_csv(
    path,
    target_column=None,
    delimiter: str = ",",
    has_header=None,
    columns=None,
    preset: str = None,
) -> Dataset:
    """Parse a numeric delimited file into a Dataset.

    Rows with missing (empty) cells are dropped and counted; any other
    non-numeric cell raises an InputError naming the row and column. The
    ``qsar`` and ``airfoil`` presets fix delimiter, header and column names
    for the raw benchmark files.
    """
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        spec = PRESETS[preset]
        delimiter = spec["delimiter"]
        has_header = spec["has_header"]
        columns = spec["columns"]
        if target_column is None:
            target_column = spec["target"]

    rows = []
    with open(path, "r", newline="") as handle:
        if delimiter is None:
            raw_rows = [line.split() for line in handle if line.strip()]
        else:
            raw_rows = [row for row in csv.reader(handle, delimiter=delimiter) if any(f.strip() for f in row)]
    if not raw_rows:
        raise InputError(f"{path}: no data rows")

    start = 0
    header = None
    if has_header is None:
        has_header = _looks_like_header(raw_rows[0])
    if has_header:
        header = [f.strip() for f in raw_rows[0]]
        start = 1
    n_cols = len(raw_rows[start]) if len(raw_rows) > start else 0
    if n_cols == 0:
        raise InputError(f"{path}: no data rows after header")
    if columns is not None:
        if len(columns) != n_cols:
            raise ConfigError(f"{len(columns)} column names for {n_cols} columns")
        names = list(columns)
    elif header is not None:
        names = header
    else:
        names = [f"col{i}" for i in range(n_cols)]

    dropped = 0
    for r, row in enumerate(raw_rows[start:], start=start + 1):
        if len(row) != n_cols:
            raise InputError(f"{path}: row {r} has {len(row)} fields, expected {n_cols}")
        if any(f.strip() == "" for f in row):
            dropped += 1
            continue
        parsed = []
        for c, fld in enumerate(row):
            try:
                parsed.append(float(fld))
            except ValueError:
                raise InputError(f"{path}: non-numeric value {fld!r} at row {r}, column {c + 1}")
        rows.append(parsed)
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, dropped)
    if not rows:
        raise InputError(f"{path}: all rows dropped")

    data = np.asarray(rows, dtype=np.float64)
    if target_column is None:
        target_idx = n_cols - 1
    elif isinstance(target_column, int):
        target_idx = target_column
    else:
        if target_column not in names:
            raise InputError(f"target column {target_column!r} not found in {names}")
        target_idx = names.index(target_column)
    if not 0 <= target_idx < n_cols:
        raise InputError(f"target column index {target_idx} out of range")

    keep = [i for i in range(n_cols) if i != target_idx]
    log.info("%s: loaded %d rows, %d features", path, data.shape[0], len(keep))
    return Dataset(
        X=data[:, keep],
        Y=data[:, target_idx],
        columns=tuple(names[i] for i in keep),
        source=str(path),
    )


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic 3-way partition of range(n)."""

    fractions: tuple
    seed: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def n(self) -> int:
        return self.train.size + self.val.size + self.test.size


def make_splits(n: int, seed: int, fractions=(0.5, 0.2, 0.3)) -> SplitPlan:
    """Random permutation split; floor counts for train and val, rest to test."""
    if n < 3:
        raise InputError("need at least 3 points to split")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) <= 0:
        raise ConfigError("fractions must be three positive numbers summing to 1")
    n_train = int(np.floor(fractions[0] * n))
    n_val = int(np.floor(fractions[1] * n))
    perm = generator(seed, "split").permutation(n)
    train = np.sort(perm[:n_train])
    val = np.sort(perm[n_train : n_train + n_val])
    test = np.sort(perm[n_train + n_val :])
    return SplitPlan(tuple(fractions), int(seed), train, val, test)
