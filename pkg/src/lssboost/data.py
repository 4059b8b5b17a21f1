"""Datasets, CSV ingestion and the heteroskedastic simulation design."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ColumnMismatchError, DataError


@dataclass
class Dataset:
    """Dense feature matrix (missing values as NaN) plus a response vector."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    response_name: str = "y"

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]
        self.feature_names = list(self.feature_names)
        n = self.X.shape[0]
        if n < 1:
            raise DataError("dataset needs at least one row")
        if self.y.shape != (n,):
            raise DataError(f"response has {self.y.size} values for {n} rows")
        if np.isnan(self.y).any():
            raise DataError(f"missing value in response at row {int(np.flatnonzero(np.isnan(self.y))[0]) + 1}")
        if len(self.feature_names) != self.X.shape[1]:
            raise DataError("one column name is needed per feature")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("column names must be unique")

    @property
    def n_rows(self):
        return self.X.shape[0]

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.feature_names, self.response_name)

    def columns(self, names):
        """Feature matrix with columns rearranged into ``names`` order."""
        missing = [c for c in names if c not in self.feature_names]
        if missing:
            raise ColumnMismatchError(
                "data lacks model columns: " + ", ".join(missing)
                + "; data has: " + ", ".join(self.feature_names)
            )
        pos = [self.feature_names.index(c) for c in names]
        return self.X[:, pos]


def _parse_cell(text):
    text = text.strip()
    if text == "":
        return math.nan
    return float(text)


def read_csv(path, response_column, require_response=True):
    """Read a header-first numeric CSV file.

    Empty cells become NaN in the feature matrix. With ``require_response``
    false, a file without the response column yields ``y`` of NaN-free zeros
    so feature-only files can be scored for prediction.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if response_column not in header:
        if require_response:
            raise DataError(f"{path}: response column {response_column!r} not found")
        resp = None
    else:
        resp = header.index(response_column)
    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 1, j] = _parse_cell(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {i}, column "
                    f"{header[j]!r}; categorical columns must be dummy-coded first"
                ) from None
    features = [j for j in range(len(header)) if j != resp]
    if resp is None:
        y = np.zeros(len(rows))
    else:
        y = values[:, resp]
        if np.isnan(y).any():
            row = int(np.flatnonzero(np.isnan(y))[0]) + 1
            raise DataError(f"{path}: missing response value at row {row}")
    return Dataset(
        values[:, features], y, [header[j] for j in features],
        response_column if resp is not None else "y",
    )


def format_float(v, digits=None):
    """Text that parses back to the same double (shortest repr, or ``digits``
    significant digits); NaN as the empty cell."""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v) if digits is None else format(v, f".{digits}g")


def write_csv(dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + [dataset.response_name])
        for xrow, yv in zip(dataset.X, dataset.y):
            w.writerow([format_float(v, 17) for v in xrow] + [format_float(yv, 17)])


def write_table(path_or_file, header, rows):
    """Write a header plus rows of str/float cells as CSV."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return str(v)

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


N_NOISE = 10


def hetero_scale(x, scale_is_variance=False):
    """Conditional standard deviation of the simulation design at ``x``.

    The step function ``1 + 4 * 1(0.3 < x < 0.5) + 2 * 1(x > 0.7)`` is read
    as a standard deviation by default and as a variance otherwise.
    """
    x = np.asarray(x, dtype=float)
    s = 1.0 + 4.0 * ((x > 0.3) & (x < 0.5)) + 2.0 * (x > 0.7)
    return np.sqrt(s) if scale_is_variance else s


def simulate_hetero(n, seed, scale_is_variance=False):
    """``y ~ N(10, sd(x)**2)`` with ``x ~ U(0, 1)`` plus ten pure-noise
    uniform columns ``X1..X10``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    noise = rng.uniform(size=(n, N_NOISE))
    y = rng.normal(10.0, hetero_scale(x, scale_is_variance))
    names = ["x"] + [f"X{j}" for j in range(1, N_NOISE + 1)]
    return Dataset(np.column_stack([x, noise]), y, names, "y")


def holdout_seed(seed):
    """Seed of the test draw paired with the training draw from ``seed``."""
    return [int(seed), 1]


def simulate_train_test(seed, n_train=7000, n_test=3000, scale_is_variance=False):
    """Independent train and test draws of the simulation design."""
    train = simulate_hetero(n_train, seed, scale_is_variance)
    test = simulate_hetero(n_test, holdout_seed(seed), scale_is_variance)
    return train, test
