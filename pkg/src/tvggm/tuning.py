"""Cross-validated selection of bandwidth, neighborhood width and sparsity.

Interleaved V-fold CV: fold v holds out every Vth observation. Training
folds drive kernel smoothing, support estimation and refitting; validation
folds score the refitted precision at each fit time through the predictive
negative log-likelihood. The bandwidth is chosen jointly for all fit
times, width and sparsity separately per fit time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import TimeGrid, TimeSeriesDataset
from .errors import (ConvergenceError, DataError, EmptyWindowError,
                     ParameterError)
from .kernels import (EPANECHNIKOV, KernelSpec, build_neighborhood,
                      kernel_weights, smoothed_covariances, to_correlation)
from .likelihood import AdmmSettings, admm_likelihood
from .pseudo import admm_pseudo
from .refit import EdgeSet, refit_mle
from .screening import connected_components, screen_adjacency


@dataclass(frozen=True)
class TuningGrid:
    """Search space and CV protocol parameters."""

    h_grid: tuple
    d_grid: tuple
    lambda_grid: tuple
    V: int = 5
    vote_threshold: float = 0.8
    edge_cap_multiplier: float = 5.0
    coarse_keep: int = 2

    def __post_init__(self):
        for name in ("h_grid", "d_grid", "lambda_grid"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ParameterError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if any(h <= 0 for h in self.h_grid):
            raise ParameterError("bandwidths must be positive")
        if any(d < 0 for d in self.d_grid):
            raise ParameterError("widths must be nonnegative")
        if any(l <= 0 for l in self.lambda_grid):
            raise ParameterError("lambda values must be positive")
        if self.V < 2:
            raise ParameterError("V must be at least 2")
        if not 0.0 <= self.vote_threshold <= 1.0:
            raise ParameterError("vote threshold must lie in [0, 1]")
        if self.edge_cap_multiplier <= 0:
            raise ParameterError("edge cap multiplier must be positive")
        if self.coarse_keep < 1:
            raise ParameterError("coarse_keep must be positive")


@dataclass(frozen=True)
class GridSchedule:
    """Declarative evaluation plan: coarse bandwidth pre-selection
    followed by the fine sweep, sparsity descending within each cell."""

    coarse_h: tuple
    coarse_d: tuple
    kept_h: int
    cells: tuple  # (h, d, lam), lam descending per (h, d)


def grid_search_schedule(grid: TuningGrid) -> GridSchedule:
    lams = tuple(sorted(grid.lambda_grid, reverse=True))
    cells = tuple((h, d, lam)
                  for h in grid.h_grid
                  for d in sorted(grid.d_grid, reverse=True)
                  for lam in lams)
    ds = sorted(grid.d_grid)
    coarse_d = (ds[len(ds) // 2],)
    coarse_h = grid.h_grid if len(grid.h_grid) > grid.coarse_keep else ()
    return GridSchedule(coarse_h=coarse_h, coarse_d=coarse_d,
                        kept_h=min(grid.coarse_keep, len(grid.h_grid)),
                        cells=cells)


@dataclass(frozen=True)
class CvResult:
    """Full CV audit trail plus the selection it implies."""

    fit_times: tuple
    folds: tuple
    rows: tuple = field(repr=False)  # (t_index, h, d, lam, fold, score)
    totals: dict = field(repr=False)  # (t_index, h, d, lam) -> summed score
    per_h_selection: dict  # h -> tuple over fit times of (d, lam)
    per_h_total: dict
    selected_h: float
    fold_edges: tuple = field(repr=False)  # per t: per-fold EdgeSet

    @property
    def selected(self):
        """Per-fit-time (d, lam) at the selected bandwidth."""
        return self.per_h_selection[self.selected_h]


def make_folds(N: int, V: int):
    """Interleaved folds: fold v validates indices {v, v+V, v+2V, ...}."""
    if N < V:
        raise ParameterError(f"cannot make {V} folds from {N} observations")
    out = []
    allidx = np.arange(N)
    for v in range(V):
        val = allidx[v::V]
        train = np.setdiff1d(allidx, val)
        out.append((val, train))
    return out


def validation_bandwidth(h: float, V: int) -> float:
    """Bandwidth for validation-fold smoothing, inflated for the smaller
    sample: h * (V-1)^(1/5)."""
    return h * (V - 1) ** 0.2


def cv_score(omega_rf: np.ndarray, sigma_val: np.ndarray) -> float:
    """Predictive negative log-likelihood of a refit precision matrix
    against the validation-fold smoothed covariance."""
    om = np.asarray(omega_rf, float)
    sign, logdet = np.linalg.slogdet(om)
    if sign <= 0:
        raise DataError("refit precision matrix must be positive definite")
    return float(np.sum(om * np.asarray(sigma_val, float)) - logdet)


def cv_vote(per_fold_edges, threshold: float = 0.8) -> EdgeSet:
    """Retain pairs present in at least ceil(threshold * V) fold models."""
    per_fold_edges = list(per_fold_edges)
    if not per_fold_edges:
        raise ParameterError("need at least one fold edge set")
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError("threshold must lie in [0, 1]")
    need = max(1, math.ceil(threshold * len(per_fold_edges)))
    counts = {}
    for es in per_fold_edges:
        for pair in es.pairs:
            counts[pair] = counts.get(pair, 0) + 1
    return EdgeSet(frozenset(p for p, c in counts.items() if c >= need))


def _fit_support(mats, lam, solver, settings, warm):
    """Screen, solve blockwise, return (EdgeSet, Z, U, info) at full size.

    Z and U are the full-size primal/dual iterates, reusable as warm
    starts for the next (smaller) lam on the same neighborhood. ``info``
    carries per-solve diagnostics (block sizes, iterations, residuals).
    """
    T, p, _ = mats.shape
    partition = connected_components(screen_adjacency(mats, lam))
    Z = np.zeros((T, p, p))
    U = np.zeros((T, p, p))
    pairs = set()
    info = {"block_sizes": partition.sizes, "iterations": 0,
            "primal_residual": 0.0, "dual_residual": 0.0}
    for block in partition.blocks:
        if len(block) == 1:
            if solver == "likelihood":
                u = block[0]
                Z[:, u, u] = 1.0 / mats[:, u, u]
            continue
        idx = np.array(block)
        sub = mats[:, idx[:, None], idx[None, :]]
        ws = None
        if warm is not None:
            ws = (warm[0][:, idx[:, None], idx[None, :]],
                  warm[1][:, idx[:, None], idx[None, :]])
        if solver == "likelihood":
            sol = admm_likelihood(sub, lam, settings, warm_start=ws)
            Z[:, idx[:, None], idx[None, :]] = sol.matrices
            U[:, idx[:, None], idx[None, :]] = sol.dual
            local = sol.support
            stats = sol
        else:
            coeffs, edges = admm_pseudo(sub, lam, settings, warm_start=ws)
            Z[:, idx[:, None], idx[None, :]] = coeffs.beta
            U[:, idx[:, None], idx[None, :]] = coeffs.dual
            local = edges.pairs
            stats = coeffs
        info["iterations"] += stats.iterations
        info["primal_residual"] = max(info["primal_residual"],
                                      stats.primal_residual)
        info["dual_residual"] = max(info["dual_residual"],
                                    stats.dual_residual)
        for a, b in local:
            u, v = block[a], block[b]
            pairs.add((min(u, v), max(u, v)))
    return EdgeSet(frozenset(pairs)), Z, U, info


def _evaluate_bandwidth(data, grid, fit_times, h, folds, solver, settings,
                        d_values, kernel_kind, as_correlation=False):
    """Score every (t, d, lam, fold) cell at one bandwidth."""
    rows = []
    totals = {}
    edge_store = {}
    lams = sorted(grid.lambda_grid, reverse=True)
    d_desc = sorted(set(d_values), reverse=True)
    d_max = d_desc[0]
    p = data.n_vars
    cap = grid.edge_cap_multiplier * p
    spec_train = KernelSpec(kernel_kind, h)
    spec_val = KernelSpec(kernel_kind, validation_bandwidth(h, grid.V))
    t_all = data.grid.times

    def add(k, d, lam, fold, score):
        rows.append((k, h, d, lam, fold, score))
        key = (k, h, d, lam)
        totals[key] = totals.get(key, 0.0) + score

    for fold, (val_idx, train_idx) in enumerate(folds):
        train_grid = TimeGrid(t_all[train_idx])
        # Identical (member times, lam) solves recur across fit times when
        # the width spans the whole window; cache them within the fold.
        solve_cache = {}
        # The refit depends only on the center-time covariance and the
        # selected edges, both of which repeat across the (d, lam) loops;
        # scoring tolerates a looser refit than the final fit does.
        refit_cache = {}
        for k, tk in enumerate(fit_times):
            try:
                wv = kernel_weights(float(tk), data.grid, spec_val,
                                    index_mask=val_idx)
            except EmptyWindowError:
                warnings.warn(
                    f"validation fold {fold} empty near t={tk:g}; skipped")
                continue
            xv = data.values * wv[:, None]
            S_val = data.values.T @ xv
            S_val = 0.5 * (S_val + S_val.T)
            if as_correlation:
                S_val = to_correlation(S_val[None])[0]
            nbhd = build_neighborhood(float(tk), d_max, train_grid)
            covs = smoothed_covariances(data, nbhd, spec_train,
                                        index_mask=train_idx,
                                        as_correlation=as_correlation)
            for d in d_desc:
                sel = np.abs(covs.times - tk) <= d + 1e-12
                mats = covs.matrices[sel]
                center = int(np.argmin(np.abs(covs.times[sel] - tk)))
                warm = None
                lam_prev = None
                capped = False
                for lam in lams:
                    if capped:
                        add(k, d, lam, fold, np.inf)
                        continue
                    if warm is not None and settings.rho is None:
                        warm = (warm[0], warm[1] * (lam_prev / lam))
                    try:
                        key = (covs.times[sel].tobytes(), lam)
                        if key in solve_cache:
                            edges, Z, U = solve_cache[key]
                        else:
                            edges, Z, U, _ = _fit_support(mats, lam, solver,
                                                          settings, warm)
                            solve_cache[key] = (edges, Z, U)
                        warm, lam_prev = (Z, U), lam
                        rkey = (k, edges.pairs)
                        om = refit_cache.get(rkey)
                        if om is None:
                            om = refit_mle(mats[center], edges, tol=1e-6)
                            refit_cache[rkey] = om
                        score = cv_score(om, S_val)
                    except (ConvergenceError, DataError) as exc:
                        warnings.warn(
                            f"cell (t={tk:g}, h={h:g}, d={d:g}, "
                            f"lam={lam:g}, fold={fold}) failed: {exc}")
                        edges = EdgeSet.empty()
                        score = np.inf
                        warm, lam_prev = None, None
                    add(k, d, lam, fold, score)
                    edge_store[(k, h, d, lam, fold)] = edges
                    if len(edges) > cap:
                        capped = True
    return rows, totals, edge_store


def _pick_cell(candidates):
    """Minimal score; ties go to larger lam, then larger d.

    ``candidates`` is an iterable of (score, d, lam)."""
    best = None
    for score, d, lam in candidates:
        key = (score, -lam, -d)
        if best is None or key < best[0]:
            best = (key, d, lam)
    if best is None or not np.isfinite(best[0][0]):
        raise ConvergenceError("no CV cell produced a finite score")
    return best[0][0], best[1], best[2]


def select_parameters(data: TimeSeriesDataset, grid: TuningGrid, fit_times,
                      solver: str = "pseudo",
                      settings: AdmmSettings = AdmmSettings(),
                      kernel_kind: str = EPANECHNIKOV,
                      common_lambda: bool = False,
                      as_correlation: bool = False) -> CvResult:
    """Run the full CV protocol and return scores plus selections.

    With ``common_lambda`` a single (d, lam) is chosen for all fit times
    (the shared-support method tunes one sparsity level); otherwise each
    fit time gets its own pair. The bandwidth is always common. With
    ``as_correlation`` every smoothed matrix (training and validation
    side) is normalized to correlation scale before solving and scoring.
    """
    fit_times = tuple(float(t) for t in fit_times)
    if not fit_times:
        raise ParameterError("need at least one fit time")
    folds = make_folds(data.n_obs, grid.V)

    hs = list(grid.h_grid)
    schedule = grid_search_schedule(grid)
    all_rows = []
    all_totals = {}
    all_edges = {}
    if schedule.coarse_h:
        coarse_scores = {}
        for h in schedule.coarse_h:
            rows, totals, _ = _evaluate_bandwidth(
                data, grid, fit_times, h, folds, solver, settings,
                schedule.coarse_d, kernel_kind, as_correlation)
            all_rows.extend(rows)
            try:
                total = 0.0
                for k in range(len(fit_times)):
                    cands = ((totals.get((k, h, d, lam), np.inf), d, lam)
                             for d in schedule.coarse_d
                             for lam in grid.lambda_grid)
                    s, _, _ = _pick_cell(cands)
                    total += s
                coarse_scores[h] = total
            except ConvergenceError:
                coarse_scores[h] = np.inf
        hs = sorted(hs, key=lambda h: (coarse_scores[h], -h))
        hs = sorted(hs[:schedule.kept_h])

    per_h_selection = {}
    per_h_total = {}
    for h in hs:
        rows, totals, edge_store = _evaluate_bandwidth(
            data, grid, fit_times, h, folds, solver, settings,
            grid.d_grid, kernel_kind, as_correlation)
        all_rows.extend(rows)
        all_totals.update(totals)
        all_edges.update(edge_store)
        if common_lambda:
            def joint(d, lam):
                return sum(all_totals.get((k, h, d, lam), np.inf)
                           for k in range(len(fit_times)))
            try:
                total, d_sel, lam_sel = _pick_cell(
                    (joint(d, lam), d, lam)
                    for d in grid.d_grid for lam in grid.lambda_grid)
            except ConvergenceError:
                continue
            per_h_selection[h] = tuple((d_sel, lam_sel) for _ in fit_times)
            per_h_total[h] = total
        else:
            sel = []
            total = 0.0
            ok = True
            for k in range(len(fit_times)):
                cands = ((all_totals.get((k, h, d, lam), np.inf), d, lam)
                         for d in grid.d_grid for lam in grid.lambda_grid)
                try:
                    s, d_sel, lam_sel = _pick_cell(cands)
                except ConvergenceError:
                    ok = False
                    break
                sel.append((d_sel, lam_sel))
                total += s
            if not ok:
                continue
            per_h_selection[h] = tuple(sel)
            per_h_total[h] = total
    if not per_h_total:
        raise ConvergenceError("cross-validation produced no usable bandwidth")
    selected_h = min(per_h_total, key=lambda h: (per_h_total[h], -h))

    fold_edges = []
    for k in range(len(fit_times)):
        d_sel, lam_sel = per_h_selection[selected_h][k]
        fold_edges.append(tuple(
            all_edges.get((k, selected_h, d_sel, lam_sel, v), EdgeSet.empty())
            for v in range(grid.V)))
    return CvResult(fit_times=fit_times, folds=tuple(folds),
                    rows=tuple(all_rows), totals=all_totals,
                    per_h_selection=per_h_selection, per_h_total=per_h_total,
                    selected_h=selected_h, fold_edges=tuple(fold_edges))
