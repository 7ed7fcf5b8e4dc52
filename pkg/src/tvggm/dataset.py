"""Temporally indexed multivariate observations and their preprocessing.

Observations live on a time grid in [0, 1]. Preprocessing covers kernel
de-trending (Gaussian kernel mean estimate subtracted rowwise), global
standardization to unit sample standard deviation, and log-return
construction from price series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateColumnError


@dataclass(frozen=True)
class TimeGrid:
    """Ordered observation times in [0, 1]."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise DataError("time grid must be a non-empty 1-d array")
        if not np.all(np.isfinite(t)):
            raise DataError("time grid contains non-finite values")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise DataError("time grid values must lie in [0, 1]")
        if np.any(np.diff(t) < 0):
            raise DataError("time grid must be non-decreasing")
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class TimeSeriesDataset:
    """N observations of p variables on a time grid.

    Values are immutable after construction and safe to share across
    parallel workers.
    """

    values: np.ndarray
    grid: TimeGrid
    names: tuple = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("values must be a 2-d array (observations x variables)")
        if not np.all(np.isfinite(v)):
            raise DataError("values contain non-finite entries")
        if v.shape[0] != len(self.grid):
            raise DataError(
                f"row count {v.shape[0]} does not match grid length {len(self.grid)}"
            )
        names = self.names
        if names is None:
            names = tuple(f"x{i + 1}" for i in range(v.shape[1]))
        else:
            names = tuple(str(n) for n in names)
            if len(names) != v.shape[1]:
                raise DataError("number of names does not match number of columns")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @property
    def n_obs(self):
        return self.values.shape[0]

    @property
    def n_vars(self):
        return self.values.shape[1]


def _gaussian_mean_weights(t, grid_times, h):
    # Normal kernel with standard deviation h; normalization makes rows
    # of the smoother matrix sum to one.
    z = (grid_times - t) / h
    w = np.exp(-0.5 * z * z)
    s = w.sum()
    if s <= 0:
        raise DataError(f"no kernel mass at t={t:g} for mean smoothing")
    return w / s


def detrend(data: TimeSeriesDataset, h: float) -> TimeSeriesDataset:
    """Subtract the kernel-estimated mean curve from every observation.

    Uses a Gaussian kernel with standard deviation ``h``. Returns a new
    dataset; the input is unchanged.
    """
    if h <= 0:
        raise DataError("mean-smoothing bandwidth must be positive")
    t = data.grid.times
    # Smoother matrix W[k, j] = weight of observation j at time t_k.
    z = (t[:, None] - t[None, :]) / h
    w = np.exp(-0.5 * z * z)
    w /= w.sum(axis=1, keepdims=True)
    mu = w @ data.values
    return TimeSeriesDataset(data.values - mu, data.grid, data.names)


def log_returns(prices: TimeSeriesDataset) -> TimeSeriesDataset:
    """Log of the ratio of adjacent prices, on a uniform rescaled grid.

    ``N`` prices give ``N - 1`` returns at times (k-1)/(N-2) for
    k = 1..N-1 (a single return lands at t = 0).
    """
    if prices.n_obs < 2:
        raise DataError("need at least two price rows to form returns")
    if np.any(prices.values <= 0):
        raise DataError("prices must be strictly positive")
    logp = np.log(prices.values)
    rets = logp[1:] - logp[:-1]
    n = rets.shape[0]
    if n == 1:
        grid = TimeGrid(np.array([0.0]))
    else:
        grid = TimeGrid(np.arange(n) / (n - 1))
    return TimeSeriesDataset(rets, grid, prices.names)


def standardize(data: TimeSeriesDataset) -> TimeSeriesDataset:
    """Scale each column to unit (global) sample standard deviation.

    Centering is assumed to have been done upstream by :func:`detrend`.
    A locally estimated scale would be the natural alternative; we keep
    the global one, matching the standardization reading of smoothing
    correlation rather than covariance matrices.
    """
    ddof = 1 if data.n_obs > 1 else 0
    sd = data.values.std(axis=0, ddof=ddof)
    bad = np.flatnonzero(sd <= 0)
    if bad.size:
        raise DegenerateColumnError(data.names[bad[0]])
    return TimeSeriesDataset(data.values / sd, data.grid, data.names)


def load_csv(path) -> TimeSeriesDataset:
    """Read a dataset from CSV.

    The header row carries variable names. An optional first column named
    ``time`` holds real observation times in [0, 1]; without it the grid
    is uniform, (k-1)/(N-1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty CSV") from None
        rows = [row for row in reader if row]
    if not rows:
        raise DataError(f"{path}: no data rows")
    has_time = header and header[0].strip().lower() == "time"
    names = [c.strip() for c in (header[1:] if has_time else header)]
    try:
        body = np.array([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if body.shape[1] != len(names) + (1 if has_time else 0):
        raise DataError(f"{path}: ragged rows")
    if has_time:
        grid = TimeGrid(body[:, 0])
        values = body[:, 1:]
    else:
        n = body.shape[0]
        grid = TimeGrid(np.arange(n) / max(n - 1, 1))
        values = body
    return TimeSeriesDataset(values, grid, names)
