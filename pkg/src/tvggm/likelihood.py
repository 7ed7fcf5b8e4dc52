"""ADMM solver for the locally weighted log-likelihood objective.

The objective couples the precision matrices at all neighborhood times
through a group penalty on each off-diagonal entry's trajectory:

    (1/sqrt(T)) * sum_i [ tr(O_i S_i) - logdet O_i ]
        + lam * sum_{u != v} sqrt( sum_i O_uv(t_i)^2 )

With a single neighborhood time this is the per-time lasso-penalized fit;
with the neighborhood spanning every fit time it is the shared-support
(time-invariant topology) fit.

The 1/sqrt(T) likelihood factor is absorbed into the proximal step: the
per-time subproblem

    min_O  (1/sqrt(T)) (tr(O S) - logdet O) + (rho/2) ||O - Z + U||_F^2

has stationarity  O^-1 - rho*sqrt(T) O = S - rho*sqrt(T) (Z - U),  so the
eigenvalue update runs with the inflated penalty rho*sqrt(T) while the
shrinkage step keeps the ratio lam/rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DataError
from .kernels import SmoothedMatrixSequence


@dataclass(frozen=True)
class AdmmSettings:
    """ADMM penalty, relaxation and stopping configuration.

    ``rho=None`` means "use the sparsity parameter lam of the solve",
    the practical recommendation.
    """

    rho: float | None = None
    alpha: float = 1.5
    eps_abs: float = 1e-5
    eps_rel: float = 1e-3
    max_iter: int = 500

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise DataError("rho must be positive")
        if not 1.0 <= self.alpha <= 2.0:
            raise DataError("relaxation alpha must lie in [1, 2]")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise DataError("tolerances must be positive")
        if self.max_iter < 1:
            raise DataError("max_iter must be positive")


@dataclass(frozen=True)
class PrecisionSequence:
    """Estimated precision matrices over a time neighborhood.

    ``matrices`` carry the sparse estimate (exact zeros from the shrinkage
    step); ``dense_matrices``, when present, carry the strictly
    positive-definite companion iterates used for warm starts.
    The support is shared across times: an off-diagonal pair is zero at
    every time or at none.
    """

    times: np.ndarray
    matrices: np.ndarray  # (T, p, p)
    support: frozenset  # of (u, v) tuples with u < v
    dense_matrices: np.ndarray | None = None
    dual: np.ndarray | None = field(default=None, repr=False)
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    residual_history: tuple = field(default=(), repr=False)

    @property
    def dim(self):
        return self.matrices.shape[1]

    @property
    def n_times(self):
        return self.matrices.shape[0]


def support_of(matrices: np.ndarray, tol: float = 0.0) -> frozenset:
    """Unordered pairs whose trajectory is not identically zero."""
    gnorm = np.sqrt((matrices ** 2).sum(axis=0))
    p = gnorm.shape[0]
    iu, ju = np.triu_indices(p, 1)
    keep = gnorm[iu, ju] > tol
    return frozenset(zip(iu[keep].tolist(), ju[keep].tolist()))


def eigen_prox(M: np.ndarray, rho: float) -> np.ndarray:
    """Positive-definite solution X of  X^-1 - rho X = M  for symmetric M.

    Works on a single matrix or a stack of them.
    """
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh(M)
    new = (-vals + np.sqrt(vals * vals + 4.0 * rho)) / (2.0 * rho)
    return (vecs * new[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def group_soft_threshold(values: np.ndarray, lam: float, rho: float,
                         penalize_diagonal: bool = False) -> np.ndarray:
    """Shrink each off-diagonal trajectory by its group norm.

    ``values`` has shape (T, p, p); the group for entry (u, v) is its
    trajectory over all T times, scaled by (1 - lam/(rho*||group||))_+.
    Diagonals pass through unchanged unless ``penalize_diagonal``.
    """
    values = np.asarray(values, dtype=float)
    gnorm = np.sqrt((values ** 2).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(gnorm > 0, 1.0 - lam / (rho * gnorm), 0.0)
    factor = np.maximum(factor, 0.0)
    if not penalize_diagonal:
        np.fill_diagonal(factor, 1.0)
    return values * factor[None, :, :]


def admm_likelihood(sigmas, lam: float, settings: AdmmSettings = AdmmSettings(),
                    warm_start=None) -> PrecisionSequence:
    """Minimize the group-penalized weighted likelihood objective by ADMM.

    ``sigmas`` is a SmoothedMatrixSequence or an (T, p, p) stack of
    symmetric PSD matrices. Returns the shrinkage iterates (exact zeros)
    as the sparse estimate, with the strictly PD proximal iterates kept
    alongside.

    ``warm_start`` optionally carries (Z0, U0) from a previous solve with
    the same rho semantics.
    """
    if isinstance(sigmas, SmoothedMatrixSequence):
        times, S = sigmas.times, sigmas.matrices
    else:
        S = np.asarray(sigmas, dtype=float)
        times = np.arange(S.shape[0], dtype=float)
    if lam <= 0:
        raise DataError("lam must be positive")
    if not np.allclose(S, np.swapaxes(S, 1, 2), atol=1e-8):
        raise DataError("input matrices must be symmetric")
    T, p, _ = S.shape
    rho = settings.rho if settings.rho is not None else lam
    rho_t = rho * np.sqrt(T)  # absorbs the 1/sqrt(T) likelihood factor
    alpha = settings.alpha

    if warm_start is not None:
        Z = np.array(warm_start[0], dtype=float)
        U = np.array(warm_start[1], dtype=float)
    else:
        Z = np.zeros_like(S)
        U = np.zeros_like(S)

    scale = np.sqrt(p * T)
    history = []
    omega = None
    for it in range(1, settings.max_iter + 1):
        Z_prev = Z
        omega = eigen_prox(S - rho_t * (Z - U), rho_t)
        omega_rel = alpha * omega + (1.0 - alpha) * Z_prev
        Z = group_soft_threshold(omega_rel + U, lam, rho)
        U = U + omega_rel - Z

        r_norm = float(np.linalg.norm(omega - Z))
        d_norm = float(np.linalg.norm(Z - Z_prev))
        eps_pri = settings.eps_abs * scale + settings.eps_rel * max(
            float(np.linalg.norm(omega)), float(np.linalg.norm(Z)))
        eps_dual = settings.eps_abs * scale + settings.eps_rel * float(
            np.linalg.norm(U))
        history.append((r_norm, d_norm))
        if r_norm <= eps_pri and d_norm <= eps_dual:
            break
    else:
        raise ConvergenceError(
            f"ADMM did not converge in {settings.max_iter} iterations "
            f"(primal {r_norm:.3e}, dual {d_norm:.3e})",
            primal_residual=r_norm, dual_residual=d_norm)

    Z = 0.5 * (Z + np.swapaxes(Z, 1, 2))
    return PrecisionSequence(
        times=np.asarray(times, dtype=float),
        matrices=Z,
        support=support_of(Z),
        dense_matrices=omega,
        dual=U,
        iterations=it,
        primal_residual=r_norm,
        dual_residual=d_norm,
        residual_history=tuple(history),
    )


def kkt_residual(solution, sigmas, lam: float) -> float:
    """Maximum violation of the stationarity conditions at a solution.

    Active trajectories must align with the normalized group direction;
    inactive ones must admit a certificate with group norm at most one.
    """
    if isinstance(solution, PrecisionSequence):
        omegas = solution.matrices
        if np.min(np.linalg.eigvalsh(omegas)) <= 0 \
                and solution.dense_matrices is not None:
            # The thresholded iterate can sit on the PD boundary before
            # full convergence; keep its support but invert the strictly
            # PD companion.
            omegas = np.where(omegas == 0, 0.0, solution.dense_matrices)
    else:
        omegas = np.asarray(solution, dtype=float)
    if isinstance(sigmas, SmoothedMatrixSequence):
        S = sigmas.matrices
    else:
        S = np.asarray(sigmas, dtype=float)
    if omegas.shape != S.shape:
        raise DataError("solution/sigma shape mismatch")
    T, p, _ = S.shape
    c = 1.0 / np.sqrt(T)

    vals = np.linalg.eigvalsh(omegas)
    if np.min(vals) <= 0:
        raise DataError("solution matrices must be positive definite")
    R = c * (S - np.linalg.inv(omegas))  # (T, p, p)

    gnorm = np.sqrt((omegas ** 2).sum(axis=0))
    worst = 0.0
    # Diagonal stationarity (unpenalized entries).
    diag = np.abs(np.einsum("tii->ti", R))
    worst = max(worst, float(diag.max()))
    for u in range(p):
        for v in range(u + 1, p):
            g = gnorm[u, v]
            for (a, b) in ((u, v), (v, u)):
                if g > 0:
                    viol = np.abs(R[:, a, b] + lam * omegas[:, a, b] / g)
                    worst = max(worst, float(viol.max()))
                else:
                    cert = np.linalg.norm(R[:, a, b] / lam)
                    worst = max(worst, lam * max(0.0, cert - 1.0))
    return worst
