"""Datasets, CSV ingestion, and the synthetic ridge-function generators.

CSV layout: header row ``f1,...,fd,target``, one decimal-float row per sample,
UTF-8 with LF line endings.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DimensionMismatchError


@dataclass
class Dataset:
    """Sample points (N x d) with scalar targets (N,)."""

    points: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.points.ndim != 2:
            raise DimensionMismatchError(
                f"points must be a 2-d array, got shape {self.points.shape}"
            )
        if self.targets.ndim != 1 or len(self.targets) != len(self.points):
            raise DimensionMismatchError(
                f"targets shape {self.targets.shape} does not match "
                f"{len(self.points)} points"
            )
        if self.points.shape[0] < 1 or self.points.shape[1] < 1:
            raise DimensionMismatchError("need at least one point and one feature")
        if not (np.isfinite(self.points).all() and np.isfinite(self.targets).all()):
            raise DataFormatError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.points[index], self.targets[index])


def dataset_to_csv(data: Dataset) -> str:
    buf = io.StringIO()
    header = [f"f{j + 1}" for j in range(data.dim)] + ["target"]
    buf.write(",".join(header) + "\n")
    for row, target in zip(data.points, data.targets):
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write(f",{float(target)!r}\n")
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty CSV") from None
    header = [h.strip() for h in header]
    d = len(header) - 1
    expected = [f"f{j + 1}" for j in range(d)] + ["target"]
    if d < 1 or header != expected:
        raise DataFormatError(
            f"bad CSV header {header!r}; expected f1,...,fd,target"
        )
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataFormatError(f"line {line_no}: expected {d + 1} fields, got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError as exc:
            raise DataFormatError(f"line {line_no}: {exc}") from None
    if not rows:
        raise DataFormatError("CSV has a header but no data rows")
    arr = np.array(rows)
    return Dataset(arr[:, :d], arr[:, d])


def save_csv(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_to_csv(data))


def load_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_csv(fh.read())


def train_test_split(data: Dataset, test_fraction: float, seed: int):
    """Random split into (train, test); deterministic per seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.n)
    n_test = max(1, int(round(data.n * test_fraction)))
    if n_test >= data.n:
        raise ValueError("split leaves no training data")
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])


RIDGE_2D_DIRECTION = np.array([1.0, 1.0]) / np.sqrt(2.0)

# The 5-d target is a sum of two ridges along these (non-orthogonal) unit
# directions; inner product -1/5.
RIDGE_5D_DIRECTIONS = (
    np.ones(5) / np.sqrt(5.0),
    np.array([-1.0, 1.0, -1.0, 1.0, -1.0]) / np.sqrt(5.0),
)


def _ridge_pair(n, d, func, noise_var, seed):
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if noise_var < 0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    rng = np.random.default_rng(seed)
    train_pts = rng.standard_normal((n, d))
    noise = rng.standard_normal(n) * np.sqrt(noise_var)
    test_pts = rng.standard_normal((n, d))
    train = Dataset(train_pts, func(train_pts) + noise)
    test = Dataset(test_pts, func(test_pts))
    return train, test


def generate_ridge_2d(n: int, noise_var: float = 1e-8, seed: int = 0):
    """tanh of the coordinate sum on N(0, I) points in R^2; the train targets
    carry N(0, noise_var) noise, the test set is noiseless."""
    return _ridge_pair(n, 2, lambda t: np.tanh(t[:, 0] + t[:, 1]), noise_var, seed)


def generate_ridge_5d(n: int, noise_var: float = 1e-8, seed: int = 0):
    """Sum of a tanh ridge along (1,..,1)/sqrt(5) and a rectified ridge along
    the alternating-sign direction, on N(0, I) points in R^5."""
    signs = np.array([-1.0, 1.0, -1.0, 1.0, -1.0])

    def func(t):
        return np.tanh(t.sum(axis=1)) + np.maximum(0.0, t @ signs)

    return _ridge_pair(n, 5, func, noise_var, seed)
