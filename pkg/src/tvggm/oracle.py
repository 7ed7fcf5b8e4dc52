"""Reference solvers for the penalized objectives, independent of ADMM.

Both problems are solved by accelerated proximal gradient descent run to a
tight relative tolerance. These routines are deliberately slow and simple;
they exist so that the ADMM solvers can be checked against an
implementation that shares no machinery with them.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, DataError
from .kernels import SmoothedMatrixSequence


def _as_stack(sigmas):
    if isinstance(sigmas, SmoothedMatrixSequence):
        return sigmas.matrices
    return np.asarray(sigmas, dtype=float)


def objective_likelihood(omegas, sigmas, lam: float) -> float:
    """Group-penalized weighted negative log-likelihood.

    The penalty runs over ordered off-diagonal pairs, so each unordered
    pair's trajectory norm is counted twice.
    """
    S = _as_stack(sigmas)
    O = np.asarray(omegas, dtype=float)
    T = S.shape[0]
    vals = np.linalg.eigvalsh(O)
    if np.min(vals) <= 0:
        return np.inf
    logdet = np.log(vals).sum(axis=1)
    fit = (np.einsum("tij,tij->t", O, S) - logdet).sum() / np.sqrt(T)
    gnorm = np.sqrt((O ** 2).sum(axis=0))
    np.fill_diagonal(gnorm, 0.0)
    return float(fit + lam * gnorm.sum())


def objective_pseudo(beta, sigmas, lam: float) -> float:
    """Paired group-penalized pseudo-likelihood (regression) objective.

    Each unordered pair contributes one group spanning both regression
    orientations across all times.
    """
    S = _as_stack(sigmas)
    B = np.asarray(beta, dtype=float)
    T = S.shape[0]
    # Quadratic loss: sum over t, u of (1/2) b'S_{-u,-u}b - S_{u,-u} b.
    M = B @ S  # M[t,u,v] = sum_w B[t,u,w] S[t,w,v]
    quad = 0.5 * np.einsum("tuv,tuv->", M, B)
    lin = np.einsum("tuv,tuv->", B, S)
    fit = (quad - lin) / np.sqrt(T)
    sq = (B ** 2).sum(axis=0)
    gnorm = np.sqrt(sq + sq.T)
    iu, ju = np.triu_indices(S.shape[1], 1)
    return float(fit + lam * gnorm[iu, ju].sum())


def _prox_group(Y, thresh, paired):
    if paired:
        sq = (Y ** 2).sum(axis=0)
        gnorm = np.sqrt(sq + sq.T)
    else:
        gnorm = np.sqrt((Y ** 2).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(gnorm > 0, 1.0 - thresh / gnorm, 0.0)
    factor = np.maximum(factor, 0.0)
    np.fill_diagonal(factor, 1.0)
    out = Y * factor[None, :, :]
    return out


def oracle_likelihood(sigmas, lam: float, tol: float = 1e-10,
                      max_iter: int = 200_000) -> np.ndarray:
    """Minimize the penalized weighted likelihood by proximal gradient.

    Backtracking line search with a positive-definiteness guard; FISTA
    momentum with restart on objective increase. Returns the (T, p, p)
    stack of precision matrices.
    """
    S = _as_stack(sigmas)
    if lam <= 0:
        raise DataError("lam must be positive")
    T, p, _ = S.shape
    c = 1.0 / np.sqrt(T)

    O = np.repeat(np.eye(p)[None, :, :], T, axis=0)
    Y = O.copy()
    step = 1.0
    tk = 1.0
    f_prev = objective_likelihood(O, S, lam)
    for _ in range(max_iter):
        vals, vecs = np.linalg.eigh(Y)
        if np.min(vals) <= 0:
            # Momentum overshot the PD cone; restart from the last iterate.
            Y = O.copy()
            tk = 1.0
            vals, vecs = np.linalg.eigh(Y)
        inv = (vecs / vals[:, None, :]) @ np.swapaxes(vecs, 1, 2)
        grad = c * (S - inv)
        g_y = c * float(
            (np.einsum("tij,tij->t", Y, S) - np.log(vals).sum(axis=1)).sum())

        while True:
            cand = Y - step * grad
            cand = _prox_group(cand, step * lam, paired=False)
            cand = 0.5 * (cand + np.swapaxes(cand, 1, 2))
            cand_vals = np.linalg.eigvalsh(cand)
            if np.min(cand_vals) > 0:
                logdet = np.log(cand_vals).sum(axis=1)
                g_c = c * float(
                    (np.einsum("tij,tij->t", cand, S) - logdet).sum())
                diff = cand - Y
                bound = g_y + float(np.sum(grad * diff)) \
                    + float(np.sum(diff * diff)) / (2.0 * step)
                if g_c <= bound + 1e-12 * max(1.0, abs(g_y)):
                    break
            step *= 0.5
            if step < 1e-14:
                raise ConvergenceError("likelihood oracle line search stalled")

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        O_prev, O = O, cand
        f = objective_likelihood(O, S, lam)
        if f > f_prev:  # restart momentum
            Y = O.copy()
            tk = 1.0
        else:
            Y = O + ((tk - 1.0) / t_next) * (O - O_prev)
            tk = t_next
        if abs(f_prev - f) <= tol * max(1.0, abs(f_prev)):
            return O
        f_prev = min(f_prev, f)
        step *= 2.0
    raise ConvergenceError(
        f"likelihood oracle did not converge in {max_iter} iterations")


def oracle_pseudo(sigmas, lam: float, tol: float = 1e-12,
                  max_iter: int = 500_000) -> np.ndarray:
    """Minimize the paired group-lasso regression objective by FISTA.

    Fixed step 1/L with L the largest spectral norm of the covariance
    stack (the loss is separable over times and responses). Returns the
    (T, p, p) coefficient stack with zero diagonal.
    """
    S = _as_stack(sigmas)
    if lam < 0:
        raise DataError("lam must be nonnegative")
    T, p, _ = S.shape
    c = 1.0 / np.sqrt(T)
    L = c * float(np.max(np.linalg.eigvalsh(S)))
    if L <= 0:
        raise DataError("covariance stack must have positive spectral norm")
    step = 1.0 / L

    B = np.zeros((T, p, p))
    Y = B.copy()
    tk = 1.0
    f_prev = objective_pseudo(B, S, lam)
    for _ in range(max_iter):
        grad = c * (Y @ S - S)
        dview = np.einsum("tuu->tu", grad)
        dview[...] = 0.0
        cand = _prox_group(Y - step * grad, step * lam, paired=True)
        dview = np.einsum("tuu->tu", cand)
        dview[...] = 0.0

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        B_prev, B = B, cand
        f = objective_pseudo(B, S, lam)
        if f > f_prev:
            Y = B.copy()
            tk = 1.0
        else:
            Y = B + ((tk - 1.0) / t_next) * (B - B_prev)
            tk = t_next
        if abs(f_prev - f) <= tol * max(1.0, abs(f_prev)):
            return B
        f_prev = min(f_prev, f)
    raise ConvergenceError(
        f"pseudo oracle did not converge in {max_iter} iterations")


def oracle_solve(sigmas, lam: float, objective: str = "likelihood"):
    """Reference minimizer and objective value for either problem.

    ``objective`` selects the penalized weighted likelihood
    ("likelihood") or the paired group-lasso regression ("pseudo").
    Intended for tiny instances only.
    """
    if objective == "likelihood":
        sol = oracle_likelihood(sigmas, lam)
        return sol, objective_likelihood(sol, sigmas, lam)
    if objective == "pseudo":
        sol = oracle_pseudo(sigmas, lam)
        return sol, objective_pseudo(sol, sigmas, lam)
    raise DataError(f"unknown objective {objective!r}")
