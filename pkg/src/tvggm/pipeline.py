"""End-to-end fitting: smooth, screen, solve, refit, per fit time.

Three methods share one engine. ``loggle`` couples each fit time to its
width-d neighborhood; ``kernel`` is the width-0 degenerate case (each time
fit independently); ``invar`` spans the whole window with one joint solve,
so every fit time carries the same edge set.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dataset import TimeGrid, TimeSeriesDataset
from .errors import ParameterError, TvggmError
from .kernels import (KernelSpec, Neighborhood, build_neighborhood,
                      smoothed_covariances, to_correlation)
from .likelihood import AdmmSettings
from .refit import EdgeSet, refit_mle
from .tuning import CvResult, TuningGrid, _fit_support, cv_vote, \
    select_parameters

LOGGLE = "loggle"
KERNEL = "kernel"
INVAR = "invar"


def _broadcast(value, n, name):
    try:
        vals = tuple(float(v) for v in value)
    except TypeError:
        vals = (float(value),) * n
    if len(vals) != n:
        raise ParameterError(f"{name}: expected scalar or {n} values")
    return vals


@dataclass(frozen=True)
class FitConfig:
    """Everything a fit needs besides the data."""

    method: str = LOGGLE
    solver: str = "pseudo"
    kernel: KernelSpec = KernelSpec()
    d: object = 0.1
    lam: object = 0.25
    fit_times: tuple = (0.5,)
    admm: AdmmSettings = AdmmSettings()
    as_correlation: bool = False

    def __post_init__(self):
        if self.method not in (LOGGLE, KERNEL, INVAR):
            raise ParameterError(f"unknown method {self.method!r}")
        if self.solver not in ("likelihood", "pseudo"):
            raise ParameterError(f"unknown solver {self.solver!r}")
        ft = tuple(float(t) for t in self.fit_times)
        if not ft or any(not 0.0 <= t <= 1.0 for t in ft):
            raise ParameterError("fit times must be a non-empty subset of [0, 1]")
        object.__setattr__(self, "fit_times", ft)
        d = _broadcast(self.d, len(ft), "d")
        lam = _broadcast(self.lam, len(ft), "lam")
        if self.method == KERNEL:
            d = (0.0,) * len(ft)
        if self.method == INVAR:
            # One joint solve: a single width and sparsity level apply.
            d = (1.0,) * len(ft)
            if len(set(lam)) != 1:
                raise ParameterError("invar uses a single lam for all times")
        if any(v < 0 for v in d):
            raise ParameterError("widths must be nonnegative")
        if any(v <= 0 for v in lam):
            raise ParameterError("lam values must be positive")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class GraphPath:
    """Per-fit-time estimates: edges, refit precision, parameters."""

    times: tuple
    edge_sets: tuple
    precisions: tuple  # refit (p, p) matrices; None where a time failed
    params: tuple  # (d, lam) per time
    diagnostics: tuple  # dict per time

    @property
    def edge_counts(self):
        return tuple(len(e) for e in self.edge_sets)


def _refit_at(sigma_cov, edges, as_correlation):
    """Refit on a covariance-scale matrix, optionally through the
    correlation scale with the diagonal scaled back afterwards."""
    if not as_correlation:
        return refit_mle(sigma_cov, edges)
    R = to_correlation(sigma_cov[None])[0]
    om_corr = refit_mle(R, edges)
    dinv = 1.0 / np.sqrt(np.diag(sigma_cov))
    return om_corr * dinv[:, None] * dinv[None, :]


def fit_path(data: TimeSeriesDataset, config: FitConfig) -> GraphPath:
    """Fit the configured method at every fit time.

    Failures (solver or refit) are recorded in that time's diagnostics;
    the remaining times still complete.
    """
    ft = config.fit_times
    if config.method == INVAR:
        return _fit_invar(data, config)

    edge_sets, precisions, diags = [], [], []
    for k, tk in enumerate(ft):
        d_k, lam_k = config.d[k], config.lam[k]
        diag = {"t": tk, "d": d_k, "lam": lam_k}
        try:
            nbhd = build_neighborhood(tk, d_k, data.grid)
            covs = smoothed_covariances(data, nbhd, config.kernel)
            mats = covs.matrices
            if config.as_correlation:
                solve_mats = to_correlation(mats, data.names)
            else:
                solve_mats = mats
            edges, _, _, info = _fit_support(
                solve_mats, lam_k, config.solver, config.admm, None)
            center = nbhd.center_index
            om = _refit_at(mats[center], edges, config.as_correlation)
            diag.update(info)
            diag["n_member_times"] = nbhd.size
            edge_sets.append(edges)
            precisions.append(om)
        except TvggmError as exc:
            diag["error"] = str(exc)
            edge_sets.append(EdgeSet.empty())
            precisions.append(None)
        diags.append(diag)
    return GraphPath(times=ft, edge_sets=tuple(edge_sets),
                     precisions=tuple(precisions),
                     params=tuple(zip(config.d, config.lam)),
                     diagnostics=tuple(diags))


def _fit_invar(data, config):
    """One joint solve over the whole window; shared edge set."""
    ft = config.fit_times
    lam = config.lam[0]
    members = np.union1d(data.grid.times, np.asarray(ft, float))
    nbhd = Neighborhood(0.5, 1.0, members)
    covs = smoothed_covariances(data, nbhd, config.kernel)
    mats = covs.matrices
    solve_mats = to_correlation(mats, data.names) if config.as_correlation \
        else mats
    edges, _, _, info = _fit_support(solve_mats, lam, config.solver,
                                     config.admm, None)
    edge_sets, precisions, diags = [], [], []
    for tk in ft:
        diag = {"t": tk, "d": 1.0, "lam": lam}
        diag.update(info)
        idx = int(np.argmin(np.abs(covs.times - tk)))
        try:
            om = _refit_at(mats[idx], edges, config.as_correlation)
            precisions.append(om)
            edge_sets.append(edges)
        except TvggmError as exc:
            diag["error"] = str(exc)
            precisions.append(None)
            edge_sets.append(EdgeSet.empty())
        diags.append(diag)
    return GraphPath(times=ft, edge_sets=tuple(edge_sets),
                     precisions=tuple(precisions),
                     params=tuple((1.0, lam) for _ in ft),
                     diagnostics=tuple(diags))


def fit_with_tuning(data: TimeSeriesDataset, grid: TuningGrid, fit_times,
                    solver: str = "pseudo", method: str = LOGGLE,
                    kernel_kind: str = "epanechnikov",
                    settings: AdmmSettings = AdmmSettings(),
                    use_vote_edges: bool = True,
                    as_correlation: bool = False):
    """CV-select parameters, vote-filter edges, refit on the full data.

    Returns (GraphPath, CvResult). With ``use_vote_edges`` the reported
    edge sets are the fold-vote survivors; otherwise a full-data fit at
    the selected parameters supplies them. ``as_correlation`` runs every
    solve and score on correlation-normalized smoothed matrices, with
    reported precisions scaled back to the covariance scale.
    """
    if method == KERNEL:
        grid = dataclasses.replace(grid, d_grid=(0.0,))
    elif method == INVAR:
        grid = dataclasses.replace(grid, d_grid=(1.0,))
    cv = select_parameters(data, grid, fit_times, solver=solver,
                           settings=settings, kernel_kind=kernel_kind,
                           common_lambda=(method == INVAR),
                           as_correlation=as_correlation)
    spec = KernelSpec(kernel_kind, cv.selected_h)
    fit_times = cv.fit_times

    if method == INVAR:
        # One vote over the joint-solve folds keeps the edge set shared.
        voted = [cv_vote(cv.fold_edges[0], grid.vote_threshold)] * len(fit_times)
    else:
        voted = [cv_vote(cv.fold_edges[k], grid.vote_threshold)
                 for k in range(len(fit_times))]

    d_sel = tuple(dl[0] for dl in cv.selected)
    lam_sel = tuple(dl[1] for dl in cv.selected)
    config = FitConfig(method=method, solver=solver, kernel=spec,
                       d=d_sel, lam=lam_sel, fit_times=fit_times,
                       admm=settings, as_correlation=as_correlation)
    if not use_vote_edges:
        return fit_path(data, config), cv

    edge_sets, precisions, diags = [], [], []
    for k, tk in enumerate(fit_times):
        edges = voted[k]
        diag = {"t": tk, "d": d_sel[k], "lam": lam_sel[k],
                "h": cv.selected_h, "vote_edges": len(edges)}
        try:
            nbhd = build_neighborhood(tk, d_sel[k], data.grid)
            covs = smoothed_covariances(data, nbhd, spec)
            om = _refit_at(covs.matrices[nbhd.center_index], edges,
                           as_correlation)
            precisions.append(om)
            edge_sets.append(edges)
        except TvggmError as exc:
            diag["error"] = str(exc)
            precisions.append(None)
            edge_sets.append(EdgeSet.empty())
        diags.append(diag)
    path = GraphPath(times=fit_times, edge_sets=tuple(edge_sets),
                     precisions=tuple(precisions),
                     params=tuple(zip(d_sel, lam_sel)),
                     diagnostics=tuple(diags))
    return path, cv
