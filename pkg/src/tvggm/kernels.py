"""Kernel weights and kernel-smoothed covariance/correlation sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TimeGrid, TimeSeriesDataset
from .errors import DataError, DegenerateColumnError, EmptyWindowError

EPANECHNIKOV = "epanechnikov"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth for covariance smoothing."""

    kind: str = EPANECHNIKOV
    bandwidth: float = 0.2

    def __post_init__(self):
        if self.kind not in (EPANECHNIKOV, GAUSSIAN):
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidth > 0:
            raise DataError("bandwidth must be positive")

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """Unnormalized kernel value K(u/h)."""
        z = np.asarray(u, dtype=float) / self.bandwidth
        if self.kind == EPANECHNIKOV:
            out = 0.75 * (1.0 - z * z)
            return np.where(np.abs(z) <= 1.0, out, 0.0)
        return np.exp(-0.5 * z * z)


@dataclass(frozen=True)
class Neighborhood:
    """Times within distance d of a center time; the center is a member."""

    center_time: float
    width: float
    member_times: np.ndarray

    def __post_init__(self):
        if self.width < 0:
            raise DataError("neighborhood width must be nonnegative")
        mt = np.asarray(self.member_times, dtype=float)
        if mt.size == 0:
            raise DataError("neighborhood has no member times")
        if np.any(np.abs(mt - self.center_time) > self.width + 1e-12):
            raise DataError("member time outside the neighborhood width")
        object.__setattr__(self, "member_times", mt)

    @property
    def size(self):
        return self.member_times.size

    @property
    def center_index(self):
        return int(np.argmin(np.abs(self.member_times - self.center_time)))


def build_neighborhood(center_time, width, grid: TimeGrid) -> Neighborhood:
    """Member times = grid times within ``width`` of the center, plus the
    center itself when it is off-grid (the augmented-index construction)."""
    t = grid.times
    members = t[np.abs(t - center_time) <= width]
    if not np.any(np.isclose(members, center_time, atol=1e-12)):
        members = np.sort(np.append(members, center_time))
    return Neighborhood(center_time, width, np.unique(members))


@dataclass(frozen=True)
class SmoothedMatrixSequence:
    """Kernel-smoothed p x p matrices, one per time."""

    times: np.ndarray
    matrices: np.ndarray  # shape (T, p, p)

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise DataError("matrices must have shape (T, p, p)")
        if t.size != m.shape[0]:
            raise DataError("times/matrices length mismatch")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "matrices", m)

    @property
    def n_times(self):
        return self.matrices.shape[0]

    @property
    def dim(self):
        return self.matrices.shape[1]

    def restrict(self, variable_indices) -> "SmoothedMatrixSequence":
        idx = np.asarray(variable_indices, dtype=int)
        return SmoothedMatrixSequence(
            self.times, self.matrices[:, idx[:, None], idx[None, :]]
        )


def kernel_weights(t: float, grid: TimeGrid, spec: KernelSpec,
                   index_mask=None) -> np.ndarray:
    """Normalized kernel weights of every grid point at time ``t``.

    ``index_mask`` optionally restricts the mass to a subset of grid
    indices (used for CV folds); excluded entries get weight zero.
    """
    raw = spec.evaluate(grid.times - t)
    if index_mask is not None:
        mask = np.zeros(len(grid), dtype=bool)
        mask[np.asarray(index_mask, dtype=int)] = True
        raw = np.where(mask, raw, 0.0)
    total = raw.sum()
    if total <= 0:
        raise EmptyWindowError(t, spec.bandwidth)
    return raw / total


def smoothed_covariances(data: TimeSeriesDataset, nbhd: Neighborhood,
                         spec: KernelSpec, as_correlation: bool = False,
                         index_mask=None) -> SmoothedMatrixSequence:
    """Kernel covariance (or correlation) estimates at every neighborhood
    member time.

    Assumes the data are centered (de-trended upstream). Each matrix is a
    convex combination of rank-1 outer products, hence PSD.
    """
    x = data.values
    mats = np.empty((nbhd.size, data.n_vars, data.n_vars))
    for i, t in enumerate(nbhd.member_times):
        w = kernel_weights(float(t), data.grid, spec, index_mask=index_mask)
        xw = x * w[:, None]
        mats[i] = x.T @ xw
        mats[i] = 0.5 * (mats[i] + mats[i].T)
    if as_correlation:
        mats = to_correlation(mats, data.names)
    return SmoothedMatrixSequence(nbhd.member_times, mats)


def to_correlation(mats: np.ndarray, names=None) -> np.ndarray:
    """Rescale a stack of PSD matrices to unit diagonal."""
    diag = np.einsum("tii->ti", mats)
    bad = np.flatnonzero(np.min(diag, axis=0) <= 0)
    if bad.size:
        col = names[bad[0]] if names is not None else bad[0]
        raise DegenerateColumnError(col, f"zero smoothed variance: {col!r}")
    scale = 1.0 / np.sqrt(diag)
    return mats * scale[:, :, None] * scale[:, None, :]
